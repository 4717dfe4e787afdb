#include "seedlab/toydata/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "seedlab/error.hpp"
#include "seedlab/toydata/edits.hpp"
#include "seedlab/toydata/features.hpp"

namespace seedlab::toy {

namespace {

constexpr double kSourceRange = 2.0;
constexpr double kVideoJitter = 0.01;

double signed_uniform(num::Rng& r, double lo, double hi) {
    const double mag = r.uniform(lo, hi);
    return r.bernoulli(0.5) ? mag : -mag;
}

Instruction draw_instruction(OpKind op, num::Rng& r) {
    Instruction in;
    in.op = op;
    switch (op) {
        case OpKind::shift_content:
            in.params[0] = signed_uniform(r, 0.5, 2.0);
            break;
        case OpKind::rotate_structure:
            in.params[0] = signed_uniform(r, 0.3, 1.2);
            break;
        case OpKind::swap_style:
            in.params[0] = r.uniform(0.5, 2.0);
            break;
        case OpKind::change_identity:
            in.params = {r.uniform(1.0, 2.0), r.uniform(0.5, 2.5), r.uniform(0.0, 2.0 * std::numbers::pi), 0.0};
            break;
        case OpKind::global_restyle:
            in.params[0] = r.bernoulli(0.5) ? r.uniform(0.5, 0.8) : r.uniform(1.25, 1.5);
            in.params[1] = r.uniform(-0.5, 0.5);
            break;
        case OpKind::identity_noop:
            break;
    }
    return in;
}

void clamp_values(ToySample& s) {
    for (double& v : s.values) v = std::clamp(v, -kValueBound, kValueBound);
}

ToySample random_sample(std::size_t dim, num::Rng& r) {
    ToySample s;
    s.values.resize(dim);
    for (double& v : s.values) v = r.uniform(-kSourceRange, kSourceRange);
    return s;
}

}  // namespace

std::vector<OpKind> default_ops(SourceKind kind) {
    switch (kind) {
        case SourceKind::synthesized:
            return {OpKind::shift_content, OpKind::rotate_structure, OpKind::swap_style, OpKind::change_identity,
                    OpKind::global_restyle};
        case SourceKind::specialist:
            return {OpKind::shift_content, OpKind::rotate_structure, OpKind::swap_style, OpKind::change_identity};
        case SourceKind::traditional_op:
            return {OpKind::shift_content, OpKind::rotate_structure, OpKind::swap_style, OpKind::global_restyle};
        case SourceKind::video_frames:
            return {OpKind::shift_content, OpKind::rotate_structure};
    }
    return {};
}

Dataset gen_pairs(SourceKind kind, std::size_t n, std::span<const std::size_t> dims, const num::Rng& rng,
                  const GenOptions& options) {
    if (n == 0) throw ContractError("gen_pairs needs n > 0");
    if (dims.empty()) throw ContractError("gen_pairs needs a nonempty dim set");
    for (std::size_t d : dims) {
        if (!is_supported_dim(d)) throw ContractError("gen_pairs: unsupported dim " + std::to_string(d));
    }
    const std::vector<OpKind> ops = options.ops.empty() ? default_ops(kind) : options.ops;
    if (kind == SourceKind::traditional_op) {
        for (OpKind op : ops) {
            if (op == OpKind::identity_noop) throw ContractError("traditional_op source cannot emit identity_noop");
        }
    }

    Dataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t id = options.id_offset + i;
        num::Rng r = rng.fork(id);
        EditPair pair;
        pair.id = id;
        const std::size_t dim = dims[r.below(dims.size())];
        const OpKind op = ops[r.below(ops.size())];
        Instruction instr = draw_instruction(op, r);

        switch (kind) {
            case SourceKind::traditional_op:
                pair.source = random_sample(dim, r);
                pair.target = apply_edit(pair.source, instr);
                pair.quality = 1.0;
                break;
            case SourceKind::specialist:
                pair.source = random_sample(dim, r);
                pair.target = apply_edit(pair.source, instr);
                pair.quality = r.uniform(0.7, 1.0);
                break;
            case SourceKind::synthesized: {
                pair.source = random_sample(dim, r);
                pair.target = apply_edit(pair.source, instr);
                const auto touched = edited_blocks(op);
                std::vector<Block> untouched;
                for (std::size_t b = 0; b < kBlockCount; ++b) {
                    const Block blk = static_cast<Block>(b);
                    if (std::find(touched.begin(), touched.end(), blk) == touched.end()) untouched.push_back(blk);
                }
                const Block leak = untouched[r.below(untouched.size())];
                for (double& v : pair.target.block(leak)) v += kLeakSigma * r.normal();
                clamp_values(pair.target);
                pair.quality = r.uniform(0.3, 0.9);
                break;
            }
            case SourceKind::video_frames: {
                const ToySample latent = random_sample(dim, r);
                pair.source = latent;
                for (double& v : pair.source.values) v += kVideoJitter * r.normal();
                if (r.bernoulli(options.video_cut_probability)) {
                    pair.target = random_sample(dim, r);
                } else {
                    Instruction motion;
                    motion.op = op;
                    if (op == OpKind::rotate_structure) {
                        motion.params[0] = signed_uniform(r, 0.2, 0.8);
                    } else if (op == OpKind::shift_content) {
                        motion.params[0] = signed_uniform(r, 0.2, 1.0);
                    } else {
                        motion = instr;
                    }
                    pair.target = apply_edit(latent, motion);
                }
                for (double& v : pair.target.values) v += kVideoJitter * r.normal();
                clamp_values(pair.source);
                clamp_values(pair.target);
                pair.quality = r.uniform(0.5, 0.9);
                instr = Instruction{};
                break;
            }
        }
        if (kind != SourceKind::video_frames) attach_direction(instr, pair.source);
        pair.instruction = std::move(instr);
        pair.meta.source_kind = kind;
        pair.meta.task_label = label_for(kind);
        pair.meta.tags = compute_tags(pair.source, pair.target);
        out.push_back(std::move(pair));
    }
    return out;
}

BlockAnalysis analyze_blocks(const ToySample& source, const ToySample& target) {
    if (source.dim() != target.dim()) throw ShapeError("source/target dim mismatch");
    BlockAnalysis a;
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        auto s = source.block(static_cast<Block>(b));
        auto t = target.block(static_cast<Block>(b));
        double sq = 0.0, mx = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double d = t[i] - s[i];
            sq += d * d;
            mx = std::max(mx, std::abs(d));
        }
        a.rms_diff[b] = std::sqrt(sq / static_cast<double>(s.size()));
        a.max_abs_diff[b] = mx;
        a.similarity[b] = cosine(s, t).value_or(mx == 0.0 ? 1.0 : 0.0);
    }
    return a;
}

namespace {

// Least-squares fits for each op kind given source/target blocks.
double fit_shift(const ToySample& s, const ToySample& t) {
    auto a = s.block(Block::content), b = t.block(Block::content);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += b[i] - a[i];
    return sum / static_cast<double>(a.size());
}

double fit_rotation(const ToySample& s, const ToySample& t) {
    auto a = s.block(Block::structure), b = t.block(Block::structure);
    double cross = 0.0, dot = 0.0;
    for (std::size_t i = 0; i + 1 < a.size(); i += 2) {
        cross += a[i] * b[i + 1] - a[i + 1] * b[i];
        dot += a[i] * b[i] + a[i + 1] * b[i + 1];
    }
    return std::atan2(cross, dot);
}

double fit_swap_gain(const ToySample& s, const ToySample& t) {
    auto a = s.block(Block::style), b = t.block(Block::style);
    const std::size_t n = a.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += a[n - 1 - i] * b[i];
        den += a[n - 1 - i] * a[n - 1 - i];
    }
    return den > 0.0 ? num / den : 1.0;
}

std::array<double, 2> fit_restyle(const ToySample& s, const ToySample& t) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, n = 0.0;
    for (Block blk : {Block::structure, Block::style, Block::content}) {
        auto a = s.block(blk), b = t.block(blk);
        for (std::size_t i = 0; i < a.size(); ++i) {
            sx += a[i];
            sy += b[i];
            sxx += a[i] * a[i];
            sxy += a[i] * b[i];
            n += 1.0;
        }
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return {1.0, (sy - sx) / n};
    const double g = (n * sxy - sx * sy) / den;
    return {g, (sy - g * sx) / n};
}

// identity[i] ~ amp * sin(freq * (i+1) + phase): grid over freq, linear LS for the rest.
std::array<double, 3> fit_identity(const ToySample& t) {
    auto y = t.block(Block::identity);
    std::array<double, 3> best{0.0, 0.0, 0.0};
    double best_res = INFINITY;
    for (int step = 0; step <= 200; ++step) {
        const double freq = 0.5 + 2.0 * step / 200.0;
        double ss = 0.0, sc = 0.0, cc = 0.0, ys = 0.0, yc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double si = std::sin(freq * static_cast<double>(i + 1));
            const double ci = std::cos(freq * static_cast<double>(i + 1));
            ss += si * si;
            sc += si * ci;
            cc += ci * ci;
            ys += y[i] * si;
            yc += y[i] * ci;
        }
        const double det = ss * cc - sc * sc;
        if (std::abs(det) < 1e-12) continue;
        const double a = (ys * cc - yc * sc) / det;
        const double c = (yc * ss - ys * sc) / det;
        double res = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double pred = a * std::sin(freq * static_cast<double>(i + 1)) +
                                c * std::cos(freq * static_cast<double>(i + 1));
            res += (y[i] - pred) * (y[i] - pred);
        }
        if (res < best_res) {
            best_res = res;
            best = {std::hypot(a, c), freq, std::atan2(c, a)};
        }
    }
    return best;
}

}  // namespace

Instruction recaption(const EditPair& pair, double tag_tolerance) {
    const ToySample& s = pair.source;
    const ToySample& t = pair.target;
    const BlockAnalysis a = analyze_blocks(s, t);

    Instruction out;
    std::size_t top = 0;
    for (std::size_t b = 1; b < kBlockCount; ++b) {
        if (a.rms_diff[b] > a.rms_diff[top]) top = b;
    }
    if (*std::max_element(a.max_abs_diff.begin(), a.max_abs_diff.end()) < tag_tolerance) {
        return out;  // identity_noop
    }
    const Block dominant = static_cast<Block>(top);

    auto fitted = [&](OpKind op) {
        Instruction in;
        in.op = op;
        switch (op) {
            case OpKind::shift_content:
                in.params[0] = fit_shift(s, t);
                break;
            case OpKind::rotate_structure:
                in.params[0] = fit_rotation(s, t);
                break;
            case OpKind::swap_style:
                in.params[0] = fit_swap_gain(s, t);
                break;
            case OpKind::global_restyle: {
                const auto p = fit_restyle(s, t);
                in.params = {p[0], p[1], 0.0, 0.0};
                break;
            }
            case OpKind::change_identity: {
                const auto p = fit_identity(t);
                in.params = {p[0], p[1], p[2], 0.0};
                break;
            }
            case OpKind::identity_noop:
                break;
        }
        return in;
    };
    auto residual = [&](const Instruction& in) {
        const ToySample pred = apply_edit(s, in);
        double r = 0.0;
        for (std::size_t i = 0; i < pred.dim(); ++i) r += (pred.values[i] - t.values[i]) * (pred.values[i] - t.values[i]);
        return r;
    };

    // The dominant block names the single-block op; a global restyle competes
    // with it on least-squares residual.
    if (dominant == Block::identity) {
        out = fitted(OpKind::change_identity);
    } else {
        const OpKind local = dominant == Block::content     ? OpKind::shift_content
                             : dominant == Block::structure ? OpKind::rotate_structure
                                                            : OpKind::swap_style;
        Instruction a_local = fitted(local);
        Instruction a_global = fitted(OpKind::global_restyle);
        out = residual(a_global) < residual(a_local) ? a_global : a_local;
    }
    attach_direction(out, s);
    return out;
}

TagSet compute_tags(const ToySample& source, const ToySample& target, double tag_tolerance) {
    if (!(tag_tolerance > 0.0)) throw ContractError("tag tolerance must be positive");
    const BlockAnalysis a = analyze_blocks(source, target);
    TagSet tags;
    std::size_t changed = 0;
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        if (a.max_abs_diff[b] >= tag_tolerance) ++changed;
    }
    auto preserved = [&](Block b) { return a.max_abs_diff[static_cast<std::size_t>(b)] < tag_tolerance; };
    if (preserved(Block::identity)) tags.set(Tag::identity_preserve);
    if (preserved(Block::structure)) tags.set(Tag::structure_preserve);
    if (preserved(Block::style)) tags.set(Tag::style_preserve);
    if (changed <= 1) tags.set(Tag::local_edit);
    return tags;
}

std::string_view to_string(FilterReason r) {
    switch (r) {
        case FilterReason::kept:
            return "kept";
        case FilterReason::similarity:
            return "similarity";
        case FilterReason::displacement:
            return "displacement";
    }
    return "kept";
}

FilterDecision filter_pair(const EditPair& pair, double min_similarity, double max_change) {
    if (min_similarity < 0.0 || min_similarity > 1.0) throw ContractError("filter similarity threshold not in [0,1]");
    if (!(max_change > 0.0)) throw ContractError("filter change threshold must be positive");
    const auto& fm = FeatureMap::for_dim(pair.source.dim());
    const auto fs = fm.project(pair.source.values);
    const auto ft = fm.project(pair.target.values);
    FilterDecision d;
    // Both zero counts as identical; one zero is maximally dissimilar.
    const bool both_zero = std::all_of(fs.begin(), fs.end(), [](double v) { return v == 0.0; }) &&
                           std::all_of(ft.begin(), ft.end(), [](double v) { return v == 0.0; });
    d.similarity = both_zero ? 1.0 : cosine(fs, ft).value_or(-1.0);
    const BlockAnalysis a = analyze_blocks(pair.source, pair.target);
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        const double size = static_cast<double>(pair.source.dim() / kBlockCount);
        d.max_displacement = std::max(d.max_displacement, a.rms_diff[b] * std::sqrt(size));
    }
    if (d.similarity < min_similarity) {
        d.keep = false;
        d.reason = FilterReason::similarity;
    } else if (d.max_displacement > max_change) {
        d.keep = false;
        d.reason = FilterReason::displacement;
    }
    return d;
}

Dataset augment_reverse(const Dataset& dataset) {
    if (dataset.empty()) throw ContractError("augment_reverse on empty dataset");
    std::set<std::uint64_t> reversed;
    std::uint64_t next_id = 0;
    for (const auto& p : dataset) {
        if (p.reverse_of) reversed.insert(*p.reverse_of);
        next_id = std::max(next_id, p.id + 1);
    }
    Dataset out = dataset;
    for (const auto& p : dataset) {
        if (p.reverse_of || reversed.count(p.id) || !is_invertible(p.instruction.op)) continue;
        EditPair r;
        r.id = next_id++;
        r.source = p.target;
        r.target = p.source;
        r.instruction = inverse_instruction(p.instruction);
        attach_direction(r.instruction, r.source);
        r.meta = p.meta;
        r.quality = p.quality;
        r.importance = p.importance;
        r.reverse_of = p.id;
        out.push_back(std::move(r));
    }
    return out;
}

ResampleResult importance_resample(const Dataset& dataset, const std::array<double, kOpKindCount>& class_weights,
                                   num::Rng& rng, std::size_t n_out) {
    if (dataset.empty()) throw ContractError("importance_resample on empty dataset");
    for (double w : class_weights) {
        if (!(w > 0.0)) throw ContractError("importance_resample weights must be positive");
    }
    ResampleResult res;
    std::array<std::vector<std::size_t>, kOpKindCount> members;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        members[static_cast<std::size_t>(dataset[i].instruction.op)].push_back(i);

    double total = 0.0;
    for (std::size_t k = 0; k < kOpKindCount; ++k) {
        if (members[k].empty()) {
            res.warnings.push_back("op kind " + std::string(to_string(static_cast<OpKind>(k))) +
                                   " weighted but absent; weight renormalized");
            continue;
        }
        total += class_weights[k];
    }
    std::array<double, kOpKindCount> target{};
    std::array<double, kOpKindCount> cumulative{};
    double acc = 0.0;
    for (std::size_t k = 0; k < kOpKindCount; ++k) {
        target[k] = members[k].empty() ? 0.0 : class_weights[k] / total;
        acc += target[k];
        cumulative[k] = acc;
    }
    const double n_in = static_cast<double>(dataset.size());
    const std::size_t n = n_out ? n_out : dataset.size();
    res.dataset.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        std::size_t k = 0;
        while (k + 1 < kOpKindCount && (members[k].empty() || u >= cumulative[k])) ++k;
        while (members[k].empty()) --k;
        const auto& pool = members[k];
        EditPair rec = dataset[pool[rng.below(pool.size())]];
        const double source_freq = static_cast<double>(pool.size()) / n_in;
        rec.importance *= source_freq / target[k];
        res.dataset.push_back(std::move(rec));
    }
    return res;
}

std::vector<Bucket> plan_buckets(const Dataset& dataset, std::size_t token_budget, bool drop_tail) {
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::size_t dim = dataset[i].source.dim();
        if (token_budget < dim) {
            throw ContractError("token budget " + std::to_string(token_budget) + " below record dim " +
                                std::to_string(dim));
        }
        by_dim[dim].push_back(i);
    }
    std::vector<Bucket> out;
    for (auto& [dim, idx] : by_dim) {
        const std::size_t batch = token_budget / dim;
        for (std::size_t start = 0; start < idx.size(); start += batch) {
            const std::size_t end = std::min(idx.size(), start + batch);
            if (drop_tail && end - start < batch) break;
            out.push_back(Bucket{dim, std::vector<std::size_t>(idx.begin() + start, idx.begin() + end)});
        }
    }
    return out;
}

}  // namespace seedlab::toy
