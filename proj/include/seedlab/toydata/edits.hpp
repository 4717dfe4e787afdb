#pragma once

#include "seedlab/toydata/types.hpp"

namespace seedlab::toy {

// Analytic editors. Parameters by op kind:
//   shift_content      p0 = offset added to every content entry
//   rotate_structure   p0 = angle applied to consecutive (even, odd) structure pairs
//   swap_style         p0 = gain; style[i] <- gain * style[n-1-i]
//   change_identity    identity[i] <- p0 * sin(p1 * (i+1) + p2)
//   global_restyle     structure, style, content <- p0 * x + p1
//   identity_noop      none
ToySample apply_edit(const ToySample& source, const Instruction& instr);

// Exact inverse; only valid when is_invertible(instr.op).
Instruction inverse_instruction(const Instruction& instr);

// Fills instr.direction from the edit it produces on `source`.
void attach_direction(Instruction& instr, const ToySample& source);

}  // namespace seedlab::toy
