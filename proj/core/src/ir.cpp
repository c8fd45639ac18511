#include <sstream>

#include "dl/ir.hpp"

namespace dl {

const char* rop_name(ROp op) {
  switch (op) {
    case ROp::LdCI: return "ldci";
    case ROp::LdCF: return "ldcf";
    case ROp::LdCV: return "ldcv";
    case ROp::LdG: return "ldg";
    case ROp::MovI: return "movi";
    case ROp::MovF: return "movf";
    case ROp::MovN: return "movn";
    case ROp::MovV: return "movv";
    case ROp::ItoF: return "itof";
    case ROp::ItoN: return "iton";
    case ROp::FtoN: return "fton";
    case ROp::ItoV: return "itov";
    case ROp::FtoV: return "ftov";
    case ROp::BtoV: return "btov";
    case ROp::NtoV: return "ntov";
    case ROp::NtoFc: return "ntofc";
    case ROp::GVtoI: return "gvtoi";
    case ROp::GVtoF: return "gvtof";
    case ROp::GVtoB: return "gvtob";
    case ROp::GVtoN: return "gvton";
    case ROp::GNtoI: return "gntoi";
    case ROp::GNtoF: return "gntof";
    case ROp::FtoIt: return "ftoit";
    case ROp::NtoIt: return "ntoit";
    case ROp::GVtoIdx: return "gvtoidx";
    case ROp::GuardT: return "guard.t";
    case ROp::GuardFn: return "guard.fn";
    case ROp::GuardTrue: return "guard.true";
    case ROp::GuardFalse: return "guard.false";
    case ROp::DeoptNow: return "deopt";
    case ROp::Checkpoint: return "checkpoint";
    case ROp::AddI: return "addi";
    case ROp::SubI: return "subi";
    case ROp::MulI: return "muli";
    case ROp::EqI: return "eqi";
    case ROp::LtI: return "lti";
    case ROp::LeI: return "lei";
    case ROp::AddF: return "addf";
    case ROp::SubF: return "subf";
    case ROp::MulF: return "mulf";
    case ROp::DivF: return "divf";
    case ROp::EqF: return "eqf";
    case ROp::LtF: return "ltf";
    case ROp::LeF: return "lef";
    case ROp::AddN: return "addn";
    case ROp::SubN: return "subn";
    case ROp::MulN: return "muln";
    case ROp::DivN: return "divn";
    case ROp::EqN: return "eqn";
    case ROp::LtN: return "ltn";
    case ROp::LeN: return "len";
    case ROp::AddV: return "addv";
    case ROp::SubV: return "subv";
    case ROp::MulV: return "mulv";
    case ROp::DivV: return "divv";
    case ROp::EqV: return "eqv";
    case ROp::LtV: return "ltv";
    case ROp::LeV: return "lev";
    case ROp::IdxGetI: return "idxget.i";
    case ROp::IdxGetF: return "idxget.f";
    case ROp::IdxGetB: return "idxget.b";
    case ROp::IdxGetG: return "idxget.g";
    case ROp::IdxGetV: return "idxget.v";
    case ROp::IdxSetI: return "idxset.i";
    case ROp::IdxSetF: return "idxset.f";
    case ROp::IdxSetB: return "idxset.b";
    case ROp::IdxSetG: return "idxset.g";
    case ROp::IdxSetV: return "idxset.v";
    case ROp::LenV: return "lenv";
    case ROp::MkVec: return "mkvec";
    case ROp::PrintV: return "printv";
    case ROp::CallD: return "call.d";
    case ROp::CallC: return "call.c";
    case ROp::Jmp: return "jmp";
    case ROp::Jz: return "jz";
    case ROp::ForNext: return "fornext";
    case ROp::RetV: return "retv";
    case ROp::Nop: return "nop";
  }
  return "?";
}

namespace {

const char* cls_name(SlotCls c) {
  switch (c) {
    case SlotCls::I64: return "i64";
    case SlotCls::F64: return "f64";
    case SlotCls::NUM: return "num";
    case SlotCls::VAL: return "val";
    case SlotCls::ConstV: return "const";
    case SlotCls::Missing: return "-";
  }
  return "?";
}

void dump_slot(std::ostream& os, const SlotSrc& s) {
  if (s.cls == SlotCls::Missing) {
    os << "-";
  } else if (s.cls == SlotCls::ConstV) {
    os << "const#" << s.idx;
  } else {
    os << cls_name(s.cls) << "[" << s.idx << "]:" << s.type;
  }
}

}  // namespace

std::string dump_ir(const IRFunction& ir) {
  std::ostringstream os;
  os << "function " << (ir.src ? ir.src->name : "?") << " entry@"
     << ir.entry.entry_pc << " regs=" << ir.n_regs << "\n";
  os << "  entry locals:";
  for (const EntrySlot& e : ir.entry.locals) {
    os << " ";
    if (e.cls == SlotCls::Missing)
      os << "-";
    else
      os << cls_name(e.cls) << "[" << e.reg << "]:" << e.tag;
  }
  os << "\n  entry stack:";
  for (const EntrySlot& e : ir.entry.stack)
    os << " " << cls_name(e.cls) << "[" << e.reg << "]:" << e.tag;
  os << "\n";
  for (size_t i = 0; i < ir.code.size(); i++) {
    const RInstr& in = ir.code[i];
    os << "  " << i << ": " << rop_name(in.op) << " " << in.a << " " << in.b
       << " " << in.c << " " << in.d << "\n";
  }
  for (size_t i = 0; i < ir.exits.size(); i++) {
    const ExitDescr& e = ir.exits[i];
    os << "  exit " << i << " @pc " << e.bc_pc << " stack=[";
    for (size_t s = 0; s < e.stack.size(); s++) {
      if (s) os << ", ";
      dump_slot(os, e.stack[s]);
    }
    os << "] locals=[";
    for (size_t l = 0; l < e.locals.size(); l++) {
      if (l) os << ", ";
      dump_slot(os, e.locals[l]);
    }
    os << "]\n";
  }
  for (size_t i = 0; i < ir.guards.size(); i++) {
    const GuardInfo& g = ir.guards[i];
    os << "  guard " << i << " " << deopt_reason_name(g.kind) << " site="
       << g.site_pc << " expected=" << g.expected << " exit=" << g.exit
       << " line=" << g.line << "\n";
  }
  if (!ir.deps.empty()) {
    os << "  deps:";
    for (auto& d : ir.deps) os << " " << d.first << "@v" << d.second;
    os << "\n";
  }
  return os.str();
}

}  // namespace dl
