#include <chrono>
#include <memory>

#include "dl/ir.hpp"

namespace dl {

std::unique_ptr<Continuation> emit(IRFunction ir) {
  // Compact Nops and remap jump targets.
  std::vector<int> remap(ir.code.size() + 1, 0);
  std::vector<RInstr> out;
  out.reserve(ir.code.size());
  for (size_t i = 0; i < ir.code.size(); i++) {
    remap[i] = (int)out.size();
    if (ir.code[i].op != ROp::Nop) out.push_back(ir.code[i]);
  }
  remap[ir.code.size()] = (int)out.size();
  for (RInstr& in : out) {
    switch (in.op) {
      case ROp::Jmp: in.a = remap[(size_t)in.a]; break;
      case ROp::Jz: in.b = remap[(size_t)in.b]; break;
      case ROp::ForNext: in.c = remap[(size_t)in.c]; break;
      default: break;
    }
  }
  ir.code = std::move(out);

  auto cont = std::make_unique<Continuation>();
  cont->prog = std::move(ir);
  cont->created_ns = (uint64_t)std::chrono::duration_cast<
                         std::chrono::nanoseconds>(
                         std::chrono::steady_clock::now().time_since_epoch())
                         .count();
  return cont;
}

}  // namespace dl
