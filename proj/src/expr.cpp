#include "nsdg/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <string_view>

namespace nsdg {

namespace {

enum class Op : std::uint8_t {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMin,
  kMax,
  kAbs,
  kExp,
  kTanh,
  kSin,
  kCos,
};

// Variable slots: t, x1..x3, y1, y2, z1..z3, u, v.
enum Slot : int { kT = 0, kX1 = 1, kY1 = 4, kY2 = 5, kZ1 = 6, kU = 9, kV = 10 };

struct Instr {
  Op op;
  int arg = 0;  // variable slot or arity
  double value = 0.0;
};

std::uint32_t slot_mask(int slot) {
  if (slot == kT) return kUsesT;
  if (slot >= kX1 && slot < kY1) return kUsesX;
  if (slot == kY1) return kUsesY1;
  if (slot == kY2) return kUsesY2;
  if (slot >= kZ1 && slot < kU) return kUsesZ;
  if (slot == kU) return kUsesU;
  return kUsesV;
}

class Parser {
 public:
  explicit Parser(std::string_view s) : src_(s) {}

  std::vector<Instr> run(std::uint32_t& uses) {
    parse_sum();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    uses = uses_;
    return std::move(code_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ExprError("expression '" + std::string(src_) + "': " + what + " at offset " +
                    std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  // Accepts ASCII operators and the UTF-8 forms of minus, times and divide.
  bool eat(std::string_view tok) {
    skip_ws();
    if (src_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  bool eat_minus() { return eat("-") || eat("\xE2\x88\x92"); }
  bool eat_times() { return eat("*") || eat("\xC3\x97"); }
  bool eat_divide() { return eat("/") || eat("\xC3\xB7"); }

  void emit(Op op, int arg = 0, double value = 0.0) { code_.push_back({op, arg, value}); }

  void parse_sum() {
    parse_product();
    for (;;) {
      if (eat("+")) {
        parse_product();
        emit(Op::kAdd);
      } else if (eat_minus()) {
        parse_product();
        emit(Op::kSub);
      } else {
        return;
      }
    }
  }

  void parse_product() {
    parse_unary();
    for (;;) {
      if (eat_times()) {
        parse_unary();
        emit(Op::kMul);
      } else if (eat_divide()) {
        parse_unary();
        emit(Op::kDiv);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    if (eat_minus()) {
      parse_unary();
      emit(Op::kNeg);
    } else if (eat("+")) {
      parse_unary();
    } else {
      parse_primary();
    }
  }

  void parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      parse_sum();
      if (!eat(")")) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.data() + pos_;
      char* end = nullptr;
      double val = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      emit(Op::kConst, 0, val);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      std::string name(src_.substr(start, pos_ - start));
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == '(') {
        ++pos_;
        parse_call(name);
        return;
      }
      parse_variable(name);
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void parse_call(const std::string& name) {
    int arity = 0;
    skip_ws();
    if (!eat(")")) {
      for (;;) {
        parse_sum();
        ++arity;
        if (eat(")")) break;
        if (!eat(",")) fail("expected ',' or ')'");
      }
    }
    auto unary = [&](Op op) {
      if (arity != 1) fail(name + " takes one argument");
      emit(op);
    };
    if (name == "min" || name == "max") {
      if (arity < 2) fail(name + " takes at least two arguments");
      emit(name == "min" ? Op::kMin : Op::kMax, arity);
    } else if (name == "abs") {
      unary(Op::kAbs);
    } else if (name == "exp") {
      unary(Op::kExp);
    } else if (name == "tanh") {
      unary(Op::kTanh);
    } else if (name == "sin") {
      unary(Op::kSin);
    } else if (name == "cos") {
      unary(Op::kCos);
    } else {
      fail("unknown function '" + name + "'");
    }
  }

  void parse_variable(const std::string& name) {
    int slot = -1;
    if (name == "t") slot = kT;
    else if (name == "x" || name == "x1") slot = kX1;
    else if (name == "x2") slot = kX1 + 1;
    else if (name == "x3") slot = kX1 + 2;
    else if (name == "y1") slot = kY1;
    else if (name == "y2") slot = kY2;
    else if (name == "z" || name == "z1") slot = kZ1;
    else if (name == "z2") slot = kZ1 + 1;
    else if (name == "z3") slot = kZ1 + 2;
    else if (name == "u") slot = kU;
    else if (name == "v") slot = kV;
    if (name == "pi") {
      emit(Op::kConst, 0, 3.14159265358979323846);
      return;
    }
    if (slot < 0) fail("unknown variable '" + name + "'");
    uses_ |= slot_mask(slot);
    emit(Op::kVar, slot);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::vector<Instr> code_;
  std::uint32_t uses_ = 0;
};

std::size_t stack_depth(const std::vector<Instr>& code) {
  std::size_t depth = 0, best = 0;
  for (const auto& in : code) {
    switch (in.op) {
      case Op::kConst:
      case Op::kVar:
        ++depth;
        break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv:
        --depth;
        break;
      case Op::kMin:
      case Op::kMax:
        depth -= static_cast<std::size_t>(in.arg - 1);
        break;
      default:
        break;
    }
    best = std::max(best, depth);
  }
  return best;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (v < 0) return "(" + s + ")";
  return s;
}

double param(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return 0.0;
  const auto& p = j.at(key);
  if (!p.is_number()) throw ExprError(std::string("catalog parameter '") + key + "' must be a number");
  return p.get<double>();
}

// Appends "+ c*var" terms; an array parameter spreads over indexed variables.
void add_linear(std::string& out, const nlohmann::json& j, const char* key, const char* var) {
  if (!j.contains(key)) return;
  const auto& p = j.at(key);
  auto term = [&](double c, const std::string& name) {
    if (c != 0.0) out += " + " + num(c) + "*" + name;
  };
  if (p.is_array()) {
    for (std::size_t i = 0; i < p.size(); ++i) term(p[i].get<double>(), std::string(var) + std::to_string(i + 1));
  } else {
    term(p.get<double>(), var);
  }
}

std::string affine_text(const nlohmann::json& j) {
  std::string out = num(param(j, "c0"));
  add_linear(out, j, "t", "t");
  add_linear(out, j, "x", "x");
  add_linear(out, j, "y1", "y1");
  add_linear(out, j, "y2", "y2");
  add_linear(out, j, "z", "z");
  add_linear(out, j, "u", "u");
  add_linear(out, j, "v", "v");
  return out;
}

}  // namespace

std::string catalog_expression(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return num(param(j, "value"));
  if (kind == "affine") return affine_text(j);
  if (kind == "bilinear-control") {
    std::string out = affine_text(j);
    auto term = [&](const char* key, const char* mono) {
      double c = param(j, key);
      if (c != 0.0) out += " + " + num(c) + "*" + mono;
    };
    term("uv", "u*v");
    term("uu", "u*u");
    term("vv", "v*v");
    term("vuu", "v*u*u");
    term("ux", "u*x");
    term("vx", "v*x");
    return out;
  }
  if (kind == "bounded-nonlinear") {
    std::string out = num(param(j, "c0"));
    if (j.contains("a") && param(j, "a") != 0.0) {
      out += " + " + num(param(j, "a")) + "*tanh(" + affine_text(j.value("arg", nlohmann::json::object())) + ")";
    }
    if (j.contains("b") && param(j, "b") != 0.0) {
      out += " + " + num(param(j, "b")) + "*sin(" + affine_text(j.value("sin_arg", nlohmann::json::object())) + ")";
    }
    return out;
  }
  throw ExprError("unknown catalog kind '" + kind + "'");
}

struct Coefficient::Impl {
  std::string text;
  nlohmann::json source;
  std::vector<Instr> code;
  std::size_t depth = 0;
  std::function<double(const CoeffArgs&)> fn;
  std::uint32_t uses = 0;
};

Coefficient::Coefficient() : Coefficient(constant(0.0)) {}

Coefficient Coefficient::constant(double c) {
  auto impl = std::make_shared<Impl>();
  impl->text = num(c);
  impl->source = {{"kind", "constant"}, {"value", c}};
  impl->code = {{Op::kConst, 0, c}};
  impl->depth = 1;
  return Coefficient(std::move(impl));
}

Coefficient Coefficient::parse(const std::string& text) {
  auto impl = std::make_shared<Impl>();
  impl->text = text;
  impl->source = {{"expr", text}};
  impl->code = Parser(text).run(impl->uses);
  impl->depth = stack_depth(impl->code);
  return Coefficient(std::move(impl));
}

Coefficient Coefficient::from_json(const nlohmann::json& j) {
  if (j.is_number()) return constant(j.get<double>());
  if (j.is_string()) return parse(j.get<std::string>());
  if (!j.is_object()) throw ExprError("coefficient must be an object, string or number");
  if (j.contains("expr")) return parse(j.at("expr").get<std::string>());
  if (!j.contains("kind")) throw ExprError("coefficient object needs 'expr' or 'kind'");
  Coefficient parsed = parse(catalog_expression(j));
  auto impl = std::make_shared<Impl>(*parsed.impl_);
  impl->source = j;
  return Coefficient(std::move(impl));
}

Coefficient Coefficient::from_function(std::function<double(const CoeffArgs&)> f, std::string label,
                                       std::uint32_t uses) {
  auto impl = std::make_shared<Impl>();
  impl->text = std::move(label);
  impl->source = {{"function", impl->text}};
  impl->fn = std::move(f);
  impl->uses = uses;
  return Coefficient(std::move(impl));
}

double Coefficient::eval(const CoeffArgs& a, bool* guarded) const {
  const Impl& im = *impl_;
  if (im.fn) return im.fn(a);
  double local[32] = {};
  std::vector<double> heap;
  double* st = local;
  if (im.depth > 32) {
    heap.resize(im.depth);
    st = heap.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : im.code) {
    switch (in.op) {
      case Op::kConst:
        st[sp++] = in.value;
        break;
      case Op::kVar: {
        double val = 0.0;
        int s = in.arg;
        if (s == kT) val = a.t;
        else if (s < kY1) val = static_cast<std::size_t>(s - kX1) < a.x.size() ? a.x[s - kX1] : 0.0;
        else if (s == kY1) val = a.y1;
        else if (s == kY2) val = a.y2;
        else if (s < kU) val = static_cast<std::size_t>(s - kZ1) < a.z.size() ? a.z[s - kZ1] : 0.0;
        else if (s == kU) val = a.u;
        else val = a.v;
        st[sp++] = val;
        break;
      }
      case Op::kAdd:
        --sp;
        st[sp - 1] += st[sp];
        break;
      case Op::kSub:
        --sp;
        st[sp - 1] -= st[sp];
        break;
      case Op::kMul:
        --sp;
        st[sp - 1] *= st[sp];
        break;
      case Op::kDiv: {
        --sp;
        double den = st[sp];
        if (std::fabs(den) < kDivisionGuard) {
          if (guarded) *guarded = true;
          den = den < 0 ? -kDivisionGuard : kDivisionGuard;
        }
        st[sp - 1] /= den;
        break;
      }
      case Op::kNeg:
        st[sp - 1] = -st[sp - 1];
        break;
      case Op::kMin:
      case Op::kMax: {
        std::size_t n = static_cast<std::size_t>(in.arg);
        double r = st[sp - n];
        for (std::size_t i = sp - n + 1; i < sp; ++i) {
          r = in.op == Op::kMin ? std::min(r, st[i]) : std::max(r, st[i]);
        }
        sp -= n;
        st[sp++] = r;
        break;
      }
      case Op::kAbs:
        st[sp - 1] = std::fabs(st[sp - 1]);
        break;
      case Op::kExp:
        st[sp - 1] = std::exp(st[sp - 1]);
        break;
      case Op::kTanh:
        st[sp - 1] = std::tanh(st[sp - 1]);
        break;
      case Op::kSin:
        st[sp - 1] = std::sin(st[sp - 1]);
        break;
      case Op::kCos:
        st[sp - 1] = std::cos(st[sp - 1]);
        break;
    }
  }
  return st[0];
}

std::uint32_t Coefficient::uses() const { return impl_->uses; }
const std::string& Coefficient::text() const { return impl_->text; }
nlohmann::json Coefficient::to_json() const { return impl_->source; }

}  // namespace nsdg
