#include "seedlab/toydata/edits.hpp"

#include <cmath>

#include "seedlab/error.hpp"
#include "seedlab/toydata/features.hpp"

namespace seedlab::toy {

ToySample apply_edit(const ToySample& source, const Instruction& instr) {
    ToySample out = source;
    const auto& p = instr.params;
    switch (instr.op) {
        case OpKind::shift_content:
            for (double& v : out.block(Block::content)) v += p[0];
            break;
        case OpKind::rotate_structure: {
            const double c = std::cos(p[0]), s = std::sin(p[0]);
            auto blk = out.block(Block::structure);
            for (std::size_t i = 0; i + 1 < blk.size(); i += 2) {
                const double x = blk[i], y = blk[i + 1];
                blk[i] = c * x - s * y;
                blk[i + 1] = s * x + c * y;
            }
            break;
        }
        case OpKind::swap_style: {
            auto src = source.block(Block::style);
            auto dst = out.block(Block::style);
            const std::size_t n = dst.size();
            for (std::size_t i = 0; i < n; ++i) dst[i] = p[0] * src[n - 1 - i];
            break;
        }
        case OpKind::change_identity: {
            auto blk = out.block(Block::identity);
            for (std::size_t i = 0; i < blk.size(); ++i)
                blk[i] = p[0] * std::sin(p[1] * static_cast<double>(i + 1) + p[2]);
            break;
        }
        case OpKind::global_restyle:
            for (Block b : {Block::structure, Block::style, Block::content})
                for (double& v : out.block(b)) v = p[0] * v + p[1];
            break;
        case OpKind::identity_noop:
            break;
    }
    return out;
}

Instruction inverse_instruction(const Instruction& instr) {
    Instruction inv;
    inv.op = instr.op;
    const auto& p = instr.params;
    switch (instr.op) {
        case OpKind::shift_content:
        case OpKind::rotate_structure:
            inv.params = {-p[0], 0.0, 0.0, 0.0};
            break;
        case OpKind::swap_style:
            if (p[0] == 0.0) throw ContractError("swap_style with zero gain has no inverse");
            inv.params = {1.0 / p[0], 0.0, 0.0, 0.0};
            break;
        case OpKind::global_restyle:
            if (p[0] == 0.0) throw ContractError("global_restyle with zero gain has no inverse");
            inv.params = {1.0 / p[0], -p[1] / p[0], 0.0, 0.0};
            break;
        default:
            throw ContractError(std::string("op kind ") + std::string(to_string(instr.op)) + " has no inverse");
    }
    return inv;
}

void attach_direction(Instruction& instr, const ToySample& source) {
    const ToySample edited = apply_edit(source, instr);
    std::vector<double> delta(source.dim());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = edited.values[i] - source.values[i];
    auto feat = FeatureMap::for_dim(source.dim()).project(delta);
    double norm2 = 0.0;
    for (double v : feat) norm2 += v * v;
    if (norm2 == 0.0) {
        instr.direction.clear();
        return;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : feat) v *= inv;
    instr.direction = std::move(feat);
}

}  // namespace seedlab::toy
