#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace nsdg {

// Arguments a coefficient may read. Unused slots stay at their defaults.
struct CoeffArgs {
  double t = 0.0;
  std::span<const double> x;
  double y1 = 0.0;
  double y2 = 0.0;
  std::span<const double> z;
  double u = 0.0;
  double v = 0.0;
};

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Variable-usage bits, used to detect control independence.
enum VarMask : std::uint32_t {
  kUsesT = 1u << 0,
  kUsesX = 1u << 1,
  kUsesY1 = 1u << 2,
  kUsesY2 = 1u << 3,
  kUsesZ = 1u << 4,
  kUsesU = 1u << 5,
  kUsesV = 1u << 6,
  kUsesAll = 0x7fu,
};

inline constexpr double kDivisionGuard = 1e-12;

// Immutable scalar coefficient: a compiled expression, a catalog entry
// (compiled to an expression) or an opaque callable.
class Coefficient {
 public:
  Coefficient();  // the zero function

  static Coefficient constant(double c);
  static Coefficient parse(const std::string& text);
  static Coefficient from_json(const nlohmann::json& j);
  static Coefficient from_function(std::function<double(const CoeffArgs&)> f,
                                   std::string label,
                                   std::uint32_t uses = kUsesAll);

  double operator()(const CoeffArgs& a) const { return eval(a, nullptr); }
  // `guarded` is set when a division denominator fell below kDivisionGuard.
  double eval(const CoeffArgs& a, bool* guarded) const;

  std::uint32_t uses() const;
  bool uses_controls() const { return (uses() & (kUsesU | kUsesV)) != 0; }
  const std::string& text() const;
  nlohmann::json to_json() const;

 private:
  struct Impl;
  explicit Coefficient(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

// Expression text for a catalog entry; throws ExprError on unknown kinds.
std::string catalog_expression(const nlohmann::json& j);

}  // namespace nsdg
