#pragma once

// Immutable symbolic expression IR used to build the discretized right-hand
// side. Nodes are reference counted and never mutated after construction, so
// sub-expressions are freely shared between statements, plans and threads.
//
// The normalizing constructors (add, mul, neg, div, pow) apply exactly three
// simplifications:
//   * n-ary flattening of nested Add / Mul,
//   * constant folding (exact rationals stay exact, anything touching a real
//     constant becomes real),
//   * like-term merging inside an Add: terms whose non-constant part is
//     structurally identical have their numeric coefficients summed.
// No distribution and no common-subexpression elimination is performed, so
// operation counts are reproducible.

#include "fdlab/error.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fdlab::expr {

inline constexpr int kMaxOffset = 4;

using Offset = std::array<int, 3>;

// Grid arrays an expression can read. Conserved components come first, then
// the primitive arrays, then the staging scratch used by the baseline plan.
enum class Field : std::uint8_t {
    Rho,
    RhoU0,
    RhoU1,
    RhoU2,
    RhoE,
    U0,
    U1,
    U2,
    P,
    T,
    Scratch,
};

inline constexpr int kFieldCount = 11;

std::string_view field_name(Field f);
std::optional<Field> field_from_name(std::string_view name);
Field momentum(int axis);
Field velocity(int axis);
bool is_conserved(Field f);
bool is_primitive(Field f);
// Index i when f is the primitive velocity u_i, otherwise -1.
int velocity_index(Field f);

enum class Kind : std::uint8_t {
    Constant,
    Rational,
    FieldRef,
    WorkRef,
    LocalRef,
    Neg,
    Add,
    Mul,
    Div,
    IntPow,
    Derivative,
};

// Exact-or-real numeric coefficient used during constant folding.
class Scalar {
public:
    static Scalar rational(std::int64_t num, std::int64_t den = 1);
    static Scalar real(double value);

    bool exact() const { return exact_; }
    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double to_double() const;

    bool is_zero() const;
    bool is_one() const;
    bool is_minus_one() const;

    Scalar operator+(const Scalar& other) const;
    Scalar operator*(const Scalar& other) const;
    Scalar operator-() const;
    Scalar reciprocal() const;

private:
    bool exact_ = true;
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
    double real_ = 0.0;
};

class Node;

// Value handle to an immutable node.
class Expr {
public:
    Expr() = default;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    const Node& operator*() const { return *node_; }
    const Node* operator->() const { return node_.get(); }
    const Node* get() const { return node_.get(); }
    explicit operator bool() const { return static_cast<bool>(node_); }

    Kind kind() const;

private:
    std::shared_ptr<const Node> node_;
};

class Node {
public:
    Kind kind;
    double value = 0.0;           // Constant
    std::int64_t num = 0;         // Rational
    std::int64_t den = 1;         // Rational
    Field field = Field::Rho;     // FieldRef
    int id = 0;                   // WorkRef / LocalRef
    Offset offset{0, 0, 0};       // FieldRef / WorkRef
    int exponent = 0;             // IntPow
    std::vector<int> axes;        // Derivative
    bool composed = false;        // Derivative: nested first derivatives
    std::vector<Expr> children;
    std::size_t hash = 0;
    std::uint64_t serial = 0;     // construction order

    bool is_constant() const { return kind == Kind::Constant || kind == Kind::Rational; }
    bool is_ref() const
    {
        return kind == Kind::FieldRef || kind == Kind::WorkRef || kind == Kind::LocalRef;
    }
};

inline Kind Expr::kind() const { return node_->kind; }

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------
Expr constant(double value);
Expr rational(std::int64_t num, std::int64_t den = 1);
Expr scalar(const Scalar& s);
Expr field(Field f, Offset offset = {0, 0, 0});
Expr work(int id, Offset offset = {0, 0, 0});
Expr local(int id);

Expr neg(const Expr& x);
Expr add(std::span<const Expr> terms);
Expr add(std::initializer_list<Expr> terms);
Expr mul(std::span<const Expr> factors);
Expr mul(std::initializer_list<Expr> factors);
Expr div(const Expr& num, const Expr& den);
Expr pow(const Expr& base, int exponent);

// axes holds one axis (first derivative), a repeated pair (second derivative
// via the 5-point second-difference stencil unless composed is set) or two
// distinct axes (always composed). Axis values must lie in {0,1,2}.
Expr derivative(const Expr& operand, std::vector<int> axes, bool composed = false);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

std::optional<Scalar> as_scalar(const Expr& e);

// Rebuilds e with new children, preserving its kind and payload. No
// normalization is applied.
Expr with_children(const Expr& e, std::vector<Expr> children);

bool structurally_equal(const Expr& a, const Expr& b);

struct ExprHash {
    std::size_t operator()(const Expr& e) const { return e->hash; }
};
struct ExprEqual {
    bool operator()(const Expr& a, const Expr& b) const { return structurally_equal(a, b); }
};

// Pre-order structural rewrite. fn may return a replacement for a node; the
// replacement is not visited again. Parents of replaced nodes are rebuilt with
// with_children (no renormalization). Shared sub-nodes are rewritten once.
using RewriteFn = std::function<std::optional<Expr>(const Expr&)>;
Expr rewrite(const Expr& e, const RewriteFn& fn);

// Calls fn once per textual occurrence of every node, pre-order.
void for_each_node(const Expr& e, const std::function<void(const Expr&)>& fn);

bool contains_derivative(const Expr& e);

// Shift every Field/Work reference by delta along axis. Throws
// StructuralError when a resulting offset leaves [-kMaxOffset, kMaxOffset] or
// when a LocalRef would have to be shifted.
Expr shift(const Expr& e, int axis, int delta);

// ---------------------------------------------------------------------------
// Fourth-order central stencils
// ---------------------------------------------------------------------------
struct RationalWeight {
    std::int64_t num;
    std::int64_t den;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct StencilCoeffs {
    int order = 1;
    std::array<RationalWeight, 5> weights{}; // offsets -2..+2
    double h = 1.0;

    static StencilCoeffs first(double h);
    static StencilCoeffs second(double h);

    // Weight at offset k in [-2, 2] with the 1/h^order scaling folded in.
    double scaled(int k) const;
};

Expr first_derivative_stencil(const Expr& operand, int axis, double h);
Expr second_derivative_stencil(const Expr& operand, int axis, double h);

// Replaces every Derivative node by its stencil expansion. Composed / mixed
// derivatives apply the first-derivative stencil along axes[1] then axes[0].
Expr discretize(const Expr& e, const std::array<double, 3>& h);

// Discretizes a single Derivative node.
Expr discretize_derivative(const Expr& d, const std::array<double, 3>& h);

// ---------------------------------------------------------------------------
// Counting and evaluation
// ---------------------------------------------------------------------------
struct OpCounts {
    std::int64_t adds = 0;
    std::int64_t muls = 0;
    std::int64_t divs = 0;
    std::int64_t negs = 0;
    std::int64_t pows = 0; // number of IntPow nodes; their multiplies are in muls

    std::int64_t total() const { return adds + muls + divs + negs; }

    OpCounts& operator+=(const OpCounts& o);
    friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
    bool operator==(const OpCounts&) const = default;
};

// Counts arithmetic per textual occurrence: k-ary Add/Mul cost k-1, IntPow(n)
// costs n-1 multiplies. Throws NotDiscretizedError on Derivative nodes.
OpCounts count_ops(const Expr& e);

struct RefKey {
    Kind kind = Kind::FieldRef;
    Field field = Field::Rho;
    int id = 0;
    Offset offset{0, 0, 0};

    static RefKey of(const Node& n);
    auto operator<=>(const RefKey&) const = default;
};

std::string ref_name(const RefKey& key);

class Bindings {
public:
    using Resolver = std::function<std::optional<double>(const RefKey&)>;

    Bindings& set_field(Field f, Offset offset, double v);
    Bindings& set_field(Field f, double v) { return set_field(f, {0, 0, 0}, v); }
    Bindings& set_work(int id, Offset offset, double v);
    Bindings& set_local(int id, double v);
    // Consulted when no explicit value is present.
    Bindings& set_resolver(Resolver r);

    std::optional<double> lookup(const RefKey& key) const;

private:
    std::map<RefKey, double> values_;
    Resolver resolver_;
};

// Recursive evaluation. n-ary nodes accumulate left to right in child order.
double evaluate(const Expr& e, const Bindings& b);

// Deterministic prefix-notation dump; see docs/dump-format.md.
std::string dump(const Expr& e, bool pretty = true);

} // namespace fdlab::expr
