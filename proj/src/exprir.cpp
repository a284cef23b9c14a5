#include "fdlab/exprir.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace fdlab::expr {

namespace {

std::atomic<std::uint64_t> g_serial{0};

constexpr std::array<std::string_view, kFieldCount> kFieldNames{
    "rho", "rhou0", "rhou1", "rhou2", "rhoE", "u0", "u1", "u2", "p", "T", "scratch"};

std::size_t mix(std::size_t seed, std::size_t v)
{
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

std::size_t hash_double(double v)
{
    if (v == 0.0) v = 0.0; // fold -0.0
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(v));
    return std::hash<std::uint64_t>{}(bits);
}

void finalize(Node& n)
{
    std::size_t h = std::hash<int>{}(static_cast<int>(n.kind));
    switch (n.kind) {
    case Kind::Constant: h = mix(h, hash_double(n.value)); break;
    case Kind::Rational:
        h = mix(h, std::hash<std::int64_t>{}(n.num));
        h = mix(h, std::hash<std::int64_t>{}(n.den));
        break;
    case Kind::FieldRef:
    case Kind::WorkRef:
        h = mix(h, static_cast<std::size_t>(n.field));
        h = mix(h, static_cast<std::size_t>(n.id));
        for (int o : n.offset) h = mix(h, std::hash<int>{}(o));
        break;
    case Kind::LocalRef: h = mix(h, static_cast<std::size_t>(n.id)); break;
    case Kind::IntPow: h = mix(h, static_cast<std::size_t>(n.exponent)); break;
    case Kind::Derivative:
        for (int a : n.axes) h = mix(h, static_cast<std::size_t>(a) + 17);
        h = mix(h, n.composed ? 3 : 5);
        break;
    default: break;
    }
    for (const Expr& c : n.children) h = mix(h, c->hash);
    n.hash = h;
    n.serial = g_serial.fetch_add(1, std::memory_order_relaxed);
}

Expr make(Node n)
{
    finalize(n);
    return Expr(std::make_shared<const Node>(std::move(n)));
}

Expr make_nary(Kind kind, std::vector<Expr> children)
{
    Node n{};
    n.kind = kind;
    n.children = std::move(children);
    return make(std::move(n));
}

// Reduces n/d (d > 0) and narrows to 64 bits; nullopt on overflow.
std::optional<Scalar> reduce_exact(__int128 n, __int128 d)
{
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
        __int128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        n /= a;
        d /= a;
    }
    if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX) return std::nullopt;
    return Scalar::rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

bool payload_equal(const Node& a, const Node& b)
{
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case Kind::Constant: return a.value == b.value;
    case Kind::Rational: return a.num == b.num && a.den == b.den;
    case Kind::FieldRef: return a.field == b.field && a.offset == b.offset;
    case Kind::WorkRef: return a.id == b.id && a.offset == b.offset;
    case Kind::LocalRef: return a.id == b.id;
    case Kind::IntPow: return a.exponent == b.exponent;
    case Kind::Derivative: return a.axes == b.axes && a.composed == b.composed;
    default: return true;
    }
}

void check_axis(int axis)
{
    if (axis < 0 || axis > 2) {
        throw StructuralError("axis " + std::to_string(axis) + " outside {0,1,2}");
    }
}

// (coefficient, core) decomposition of an Add term.
std::pair<Scalar, Expr> split_term(const Expr& t)
{
    if (t.kind() == Kind::Neg) return {Scalar::rational(-1), t->children[0]};
    if (t.kind() == Kind::Mul) {
        if (auto c = as_scalar(t->children[0])) {
            std::vector<Expr> rest(t->children.begin() + 1, t->children.end());
            Expr core = rest.size() == 1 ? rest[0] : make_nary(Kind::Mul, std::move(rest));
            return {*c, core};
        }
    }
    return {Scalar::rational(1), t};
}

Expr make_term(const Scalar& coef, const Expr& core)
{
    if (coef.is_one()) return core;
    return mul({scalar(coef), core});
}

} // namespace

// ---------------------------------------------------------------------------
// Field helpers
// ---------------------------------------------------------------------------
std::string_view field_name(Field f) { return kFieldNames[static_cast<std::size_t>(f)]; }

std::optional<Field> field_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < kFieldNames.size(); ++i) {
        if (kFieldNames[i] == name) return static_cast<Field>(i);
    }
    return std::nullopt;
}

Field momentum(int axis)
{
    check_axis(axis);
    return static_cast<Field>(static_cast<int>(Field::RhoU0) + axis);
}

Field velocity(int axis)
{
    check_axis(axis);
    return static_cast<Field>(static_cast<int>(Field::U0) + axis);
}

bool is_conserved(Field f) { return static_cast<int>(f) <= static_cast<int>(Field::RhoE); }

bool is_primitive(Field f)
{
    return static_cast<int>(f) >= static_cast<int>(Field::U0) &&
           static_cast<int>(f) <= static_cast<int>(Field::T);
}

int velocity_index(Field f)
{
    int i = static_cast<int>(f) - static_cast<int>(Field::U0);
    return (i >= 0 && i < 3) ? i : -1;
}

// ---------------------------------------------------------------------------
// Scalar
// ---------------------------------------------------------------------------
Scalar Scalar::rational(std::int64_t num, std::int64_t den)
{
    if (den == 0) throw StructuralError("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = std::gcd(num, den);
    if (g == 0) g = 1;
    Scalar s;
    s.exact_ = true;
    s.num_ = num / g;
    s.den_ = den / g;
    return s;
}

Scalar Scalar::real(double value)
{
    Scalar s;
    s.exact_ = false;
    s.real_ = value;
    return s;
}

double Scalar::to_double() const
{
    return exact_ ? static_cast<double>(num_) / static_cast<double>(den_) : real_;
}

bool Scalar::is_zero() const { return exact_ ? num_ == 0 : real_ == 0.0; }
bool Scalar::is_one() const { return exact_ ? (num_ == 1 && den_ == 1) : real_ == 1.0; }
bool Scalar::is_minus_one() const { return exact_ ? (num_ == -1 && den_ == 1) : real_ == -1.0; }

Scalar Scalar::operator+(const Scalar& o) const
{
    if (exact_ && o.exact_) {
        __int128 n = static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_;
        __int128 d = static_cast<__int128>(den_) * o.den_;
        if (auto r = reduce_exact(n, d)) return *r;
    }
    return real(to_double() + o.to_double());
}

Scalar Scalar::operator*(const Scalar& o) const
{
    if (exact_ && o.exact_) {
        __int128 n = static_cast<__int128>(num_) * o.num_;
        __int128 d = static_cast<__int128>(den_) * o.den_;
        if (auto r = reduce_exact(n, d)) return *r;
    }
    return real(to_double() * o.to_double());
}

Scalar Scalar::operator-() const
{
    return exact_ ? rational(-num_, den_) : real(-real_);
}

Scalar Scalar::reciprocal() const
{
    if (is_zero()) throw StructuralError("division by constant zero");
    return exact_ ? rational(den_, num_) : real(1.0 / real_);
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------
Expr constant(double value)
{
    Node n{};
    n.kind = Kind::Constant;
    n.value = value;
    return make(std::move(n));
}

Expr rational(std::int64_t num, std::int64_t den)
{
    Scalar s = Scalar::rational(num, den);
    Node n{};
    n.kind = Kind::Rational;
    n.num = s.num();
    n.den = s.den();
    return make(std::move(n));
}

Expr scalar(const Scalar& s) { return s.exact() ? rational(s.num(), s.den()) : constant(s.to_double()); }

Expr field(Field f, Offset offset)
{
    Node n{};
    n.kind = Kind::FieldRef;
    n.field = f;
    n.offset = offset;
    return make(std::move(n));
}

Expr work(int id, Offset offset)
{
    Node n{};
    n.kind = Kind::WorkRef;
    n.id = id;
    n.offset = offset;
    return make(std::move(n));
}

Expr local(int id)
{
    Node n{};
    n.kind = Kind::LocalRef;
    n.id = id;
    return make(std::move(n));
}

std::optional<Scalar> as_scalar(const Expr& e)
{
    if (e.kind() == Kind::Rational) return Scalar::rational(e->num, e->den);
    if (e.kind() == Kind::Constant) return Scalar::real(e->value);
    return std::nullopt;
}

Expr neg(const Expr& x) { return mul({rational(-1), x}); }

Expr add(std::span<const Expr> terms)
{
    std::vector<Expr> flat;
    for (const Expr& t : terms) {
        if (t.kind() == Kind::Add) {
            flat.insert(flat.end(), t->children.begin(), t->children.end());
        } else {
            flat.push_back(t);
        }
    }

    Scalar const_sum = Scalar::rational(0);
    bool has_const = false;
    std::vector<std::pair<Scalar, Expr>> merged;
    std::unordered_map<Expr, std::size_t, ExprHash, ExprEqual> index;
    for (const Expr& t : flat) {
        if (auto s = as_scalar(t)) {
            const_sum = const_sum + *s;
            has_const = true;
            continue;
        }
        auto [coef, core] = split_term(t);
        auto it = index.find(core);
        if (it == index.end()) {
            index.emplace(core, merged.size());
            merged.emplace_back(coef, core);
        } else {
            merged[it->second].first = merged[it->second].first + coef;
        }
    }

    std::vector<Expr> out;
    if (has_const && !const_sum.is_zero()) out.push_back(scalar(const_sum));
    for (const auto& [coef, core] : merged) {
        if (coef.is_zero()) continue;
        out.push_back(make_term(coef, core));
    }
    if (out.empty()) return has_const ? scalar(const_sum) : rational(0);
    if (out.size() == 1) return out[0];
    return make_nary(Kind::Add, std::move(out));
}

Expr add(std::initializer_list<Expr> terms) { return add(std::span<const Expr>(terms.begin(), terms.size())); }

Expr mul(std::span<const Expr> factors)
{
    Scalar coef = Scalar::rational(1);
    std::vector<Expr> rest;
    std::function<void(const Expr&)> absorb = [&](const Expr& f) {
        if (auto s = as_scalar(f)) {
            coef = coef * *s;
        } else if (f.kind() == Kind::Mul) {
            for (const Expr& c : f->children) absorb(c);
        } else if (f.kind() == Kind::Neg) {
            coef = -coef;
            absorb(f->children[0]);
        } else {
            rest.push_back(f);
        }
    };
    for (const Expr& f : factors) absorb(f);

    if (coef.is_zero()) return scalar(coef);
    if (rest.empty()) return scalar(coef);
    if (coef.is_one() && rest.size() == 1) return rest[0];
    if (coef.is_one()) return make_nary(Kind::Mul, std::move(rest));
    if (coef.is_minus_one()) {
        Expr core = rest.size() == 1 ? rest[0] : make_nary(Kind::Mul, std::move(rest));
        return make_nary(Kind::Neg, {core});
    }
    rest.insert(rest.begin(), scalar(coef));
    return make_nary(Kind::Mul, std::move(rest));
}

Expr mul(std::initializer_list<Expr> factors) { return mul(std::span<const Expr>(factors.begin(), factors.size())); }

Expr div(const Expr& num, const Expr& den)
{
    if (auto d = as_scalar(den)) return mul({num, scalar(d->reciprocal())});
    return make_nary(Kind::Div, {num, den});
}

Expr pow(const Expr& base, int exponent)
{
    if (exponent < 0) throw StructuralError("negative integer power");
    if (exponent == 0) return rational(1);
    if (exponent == 1) return base;
    if (auto s = as_scalar(base)) {
        Scalar r = Scalar::rational(1);
        for (int i = 0; i < exponent; ++i) r = r * *s;
        return scalar(r);
    }
    Node n{};
    n.kind = Kind::IntPow;
    n.exponent = exponent;
    n.children = {base};
    return make(std::move(n));
}

Expr derivative(const Expr& operand, std::vector<int> axes, bool composed)
{
    if (axes.empty()) throw StructuralError("derivative without axes");
    for (int a : axes) check_axis(a);
    if (axes.size() == 1) composed = false;
    if (axes.size() == 2 && axes[0] != axes[1]) composed = true;
    Node n{};
    n.kind = Kind::Derivative;
    n.axes = std::move(axes);
    n.composed = composed;
    n.children = {operand};
    return make(std::move(n));
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, neg(b)}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return div(a, b); }
Expr operator-(const Expr& a) { return neg(a); }

Expr with_children(const Expr& e, std::vector<Expr> children)
{
    Node n = *e;
    n.children = std::move(children);
    return make(std::move(n));
}

bool structurally_equal(const Expr& a, const Expr& b)
{
    if (a.get() == b.get()) return true;
    if (!a || !b) return false;
    if (a->hash != b->hash) return false;
    if (!payload_equal(*a, *b)) return false;
    if (a->children.size() != b->children.size()) return false;
    for (std::size_t i = 0; i < a->children.size(); ++i) {
        if (!structurally_equal(a->children[i], b->children[i])) return false;
    }
    return true;
}

Expr rewrite(const Expr& e, const RewriteFn& fn)
{
    std::unordered_map<const Node*, Expr> memo;
    std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
        if (auto it = memo.find(x.get()); it != memo.end()) return it->second;
        Expr result;
        if (auto r = fn(x)) {
            result = *r;
        } else if (x->children.empty()) {
            result = x;
        } else {
            std::vector<Expr> kids;
            kids.reserve(x->children.size());
            bool changed = false;
            for (const Expr& c : x->children) {
                kids.push_back(go(c));
                changed = changed || kids.back().get() != c.get();
            }
            result = changed ? with_children(x, std::move(kids)) : x;
        }
        memo.emplace(x.get(), result);
        return result;
    };
    return go(e);
}

void for_each_node(const Expr& e, const std::function<void(const Expr&)>& fn)
{
    fn(e);
    for (const Expr& c : e->children) for_each_node(c, fn);
}

bool contains_derivative(const Expr& e)
{
    if (e.kind() == Kind::Derivative) return true;
    for (const Expr& c : e->children) {
        if (contains_derivative(c)) return true;
    }
    return false;
}

Expr shift(const Expr& e, int axis, int delta)
{
    check_axis(axis);
    return rewrite(e, [&](const Expr& x) -> std::optional<Expr> {
        if (x.kind() == Kind::LocalRef) {
            throw StructuralError("cannot shift local l" + std::to_string(x->id) + " along axis " +
                                  std::to_string(axis));
        }
        if (x.kind() != Kind::FieldRef && x.kind() != Kind::WorkRef) return std::nullopt;
        Offset o = x->offset;
        o[axis] += delta;
        if (o[axis] < -kMaxOffset || o[axis] > kMaxOffset) {
            throw StructuralError("stencil footprint overflow along axis " + std::to_string(axis) +
                                  " (offset " + std::to_string(o[axis]) + ")");
        }
        Node n = *x;
        n.offset = o;
        return make(std::move(n));
    });
}

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------
StencilCoeffs StencilCoeffs::first(double h)
{
    return StencilCoeffs{1, {{{1, 12}, {-2, 3}, {0, 1}, {2, 3}, {-1, 12}}}, h};
}

StencilCoeffs StencilCoeffs::second(double h)
{
    return StencilCoeffs{2, {{{-1, 12}, {4, 3}, {-5, 2}, {4, 3}, {-1, 12}}}, h};
}

double StencilCoeffs::scaled(int k) const
{
    const RationalWeight& w = weights[static_cast<std::size_t>(k + 2)];
    double hp = order == 1 ? h : h * h;
    return static_cast<double>(w.num) / (static_cast<double>(w.den) * hp);
}

namespace {

Expr apply_stencil(const Expr& operand, int axis, const StencilCoeffs& c)
{
    check_axis(axis);
    if (!(c.h > 0.0)) throw StructuralError("grid spacing must be positive");
    std::vector<Expr> taps;
    for (int k = -2; k <= 2; ++k) {
        if (c.weights[static_cast<std::size_t>(k + 2)].num == 0) continue;
        taps.push_back(mul({constant(c.scaled(k)), shift(operand, axis, k)}));
    }
    return add(taps);
}

} // namespace

Expr first_derivative_stencil(const Expr& operand, int axis, double h)
{
    return apply_stencil(operand, axis, StencilCoeffs::first(h));
}

Expr second_derivative_stencil(const Expr& operand, int axis, double h)
{
    return apply_stencil(operand, axis, StencilCoeffs::second(h));
}

Expr discretize_derivative(const Expr& d, const std::array<double, 3>& h)
{
    if (d.kind() != Kind::Derivative) throw StructuralError("not a derivative node");
    const auto& axes = d->axes;
    if (axes.size() > 2) {
        throw UnsupportedOrderError("derivative with " + std::to_string(axes.size()) +
                                    " axes is not supported");
    }
    Expr operand = discretize(d->children[0], h);
    if (axes.size() == 1) return first_derivative_stencil(operand, axes[0], h[axes[0]]);
    if (!d->composed) return second_derivative_stencil(operand, axes[0], h[axes[0]]);
    Expr inner = first_derivative_stencil(operand, axes[1], h[axes[1]]);
    return first_derivative_stencil(inner, axes[0], h[axes[0]]);
}

Expr discretize(const Expr& e, const std::array<double, 3>& h)
{
    return rewrite(e, [&](const Expr& x) -> std::optional<Expr> {
        if (x.kind() != Kind::Derivative) return std::nullopt;
        return discretize_derivative(x, h);
    });
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------
OpCounts& OpCounts::operator+=(const OpCounts& o)
{
    adds += o.adds;
    muls += o.muls;
    divs += o.divs;
    negs += o.negs;
    pows += o.pows;
    return *this;
}

OpCounts count_ops(const Expr& e)
{
    std::unordered_map<const Node*, OpCounts> memo;
    std::function<OpCounts(const Expr&)> go = [&](const Expr& x) -> OpCounts {
        if (auto it = memo.find(x.get()); it != memo.end()) return it->second;
        OpCounts c;
        for (const Expr& ch : x->children) c += go(ch);
        const auto k = static_cast<std::int64_t>(x->children.size());
        switch (x.kind()) {
        case Kind::Add: c.adds += k - 1; break;
        case Kind::Mul: c.muls += k - 1; break;
        case Kind::Div: c.divs += 1; break;
        case Kind::Neg: c.negs += 1; break;
        case Kind::IntPow:
            c.muls += x->exponent - 1;
            c.pows += 1;
            break;
        case Kind::Derivative: throw NotDiscretizedError("expression still contains a derivative node");
        default: break;
        }
        memo.emplace(x.get(), c);
        return c;
    };
    return go(e);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
RefKey RefKey::of(const Node& n)
{
    RefKey k;
    k.kind = n.kind;
    if (n.kind == Kind::FieldRef) {
        k.field = n.field;
        k.offset = n.offset;
    } else if (n.kind == Kind::WorkRef) {
        k.id = n.id;
        k.offset = n.offset;
    } else {
        k.id = n.id;
    }
    return k;
}

std::string ref_name(const RefKey& key)
{
    auto off = [&] {
        return "[" + std::to_string(key.offset[0]) + "," + std::to_string(key.offset[1]) + "," +
               std::to_string(key.offset[2]) + "]";
    };
    switch (key.kind) {
    case Kind::FieldRef: return std::string(field_name(key.field)) + off();
    case Kind::WorkRef: return "w" + std::to_string(key.id) + off();
    default: return "l" + std::to_string(key.id);
    }
}

Bindings& Bindings::set_field(Field f, Offset offset, double v)
{
    RefKey k;
    k.kind = Kind::FieldRef;
    k.field = f;
    k.offset = offset;
    values_[k] = v;
    return *this;
}

Bindings& Bindings::set_work(int id, Offset offset, double v)
{
    RefKey k;
    k.kind = Kind::WorkRef;
    k.id = id;
    k.offset = offset;
    values_[k] = v;
    return *this;
}

Bindings& Bindings::set_local(int id, double v)
{
    RefKey k;
    k.kind = Kind::LocalRef;
    k.id = id;
    values_[k] = v;
    return *this;
}

Bindings& Bindings::set_resolver(Resolver r)
{
    resolver_ = std::move(r);
    return *this;
}

std::optional<double> Bindings::lookup(const RefKey& key) const
{
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (resolver_) return resolver_(key);
    return std::nullopt;
}

double evaluate(const Expr& e, const Bindings& b)
{
    std::unordered_map<const Node*, double> memo;
    std::function<double(const Expr&)> go = [&](const Expr& x) -> double {
        if (auto it = memo.find(x.get()); it != memo.end()) return it->second;
        double v = 0.0;
        const auto& ch = x->children;
        switch (x.kind()) {
        case Kind::Constant: v = x->value; break;
        case Kind::Rational: v = static_cast<double>(x->num) / static_cast<double>(x->den); break;
        case Kind::FieldRef:
        case Kind::WorkRef:
        case Kind::LocalRef: {
            RefKey key = RefKey::of(*x);
            auto found = b.lookup(key);
            if (!found) throw UnboundReferenceError("unbound reference " + ref_name(key));
            v = *found;
            break;
        }
        case Kind::Neg: v = -go(ch[0]); break;
        case Kind::Add:
            v = go(ch[0]);
            for (std::size_t i = 1; i < ch.size(); ++i) v = v + go(ch[i]);
            break;
        case Kind::Mul:
            v = go(ch[0]);
            for (std::size_t i = 1; i < ch.size(); ++i) v = v * go(ch[i]);
            break;
        case Kind::Div: v = go(ch[0]) / go(ch[1]); break;
        case Kind::IntPow: {
            double base = go(ch[0]);
            v = base;
            for (int i = 1; i < x->exponent; ++i) v = v * base;
            break;
        }
        case Kind::Derivative: throw NotDiscretizedError("cannot evaluate a derivative node");
        }
        memo.emplace(x.get(), v);
        return v;
    };
    return go(e);
}

// ---------------------------------------------------------------------------
// Dump
// ---------------------------------------------------------------------------
namespace {

std::string format_real(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string atom_text(const Node& n)
{
    switch (n.kind) {
    case Kind::Constant: return format_real(n.value);
    case Kind::Rational:
        return n.den == 1 ? std::to_string(n.num) : std::to_string(n.num) + "/" + std::to_string(n.den);
    default: return ref_name(RefKey::of(n));
    }
}

std::string head_text(const Node& n)
{
    switch (n.kind) {
    case Kind::Neg: return "neg";
    case Kind::Add: return "add";
    case Kind::Mul: return "mul";
    case Kind::Div: return "div";
    case Kind::IntPow: return "pow";
    case Kind::Derivative: return n.composed ? "dc" : "d";
    default: return "?";
    }
}

// Trailing non-child arguments (exponent, axes).
std::string tail_text(const Node& n)
{
    std::string s;
    if (n.kind == Kind::IntPow) s += " " + std::to_string(n.exponent);
    if (n.kind == Kind::Derivative) {
        for (int a : n.axes) s += " " + std::to_string(a);
    }
    return s;
}

void compact(const Expr& e, std::string& out)
{
    if (e->children.empty()) {
        out += atom_text(*e);
        return;
    }
    out += "(" + head_text(*e);
    for (const Expr& c : e->children) {
        out += ' ';
        compact(c, out);
    }
    out += tail_text(*e) + ")";
}

constexpr std::size_t kLineWidth = 72;

void pretty(const Expr& e, int indent, std::string& out)
{
    std::string flat;
    compact(e, flat);
    if (e->children.empty() || flat.size() + static_cast<std::size_t>(indent) <= kLineWidth) {
        out += flat;
        return;
    }
    out += "(" + head_text(*e);
    for (const Expr& c : e->children) {
        out += '\n';
        out.append(static_cast<std::size_t>(indent + 2), ' ');
        pretty(c, indent + 2, out);
    }
    out += tail_text(*e) + ")";
}

} // namespace

std::string dump(const Expr& e, bool pretty_print)
{
    std::string out;
    if (pretty_print) {
        pretty(e, 0, out);
    } else {
        compact(e, out);
    }
    return out;
}

} // namespace fdlab::expr
