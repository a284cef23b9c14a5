#include "fdlab/nsbuilder.hpp"

#include <unordered_set>

namespace fdlab::ns {

using namespace fdlab::expr;

namespace {

Expr half() { return rational(1, 2); }

Expr d1(const Expr& f, int axis) { return derivative(f, {axis}); }
Expr lap(const Expr& f, int axis) { return derivative(f, {axis, axis}); }
// d^2 f / dx_i dx_j as nested first differences (inner along j).
Expr mixed(const Expr& f, int i, int j) { return derivative(f, {i, j}, true); }

Expr rho() { return field(Field::Rho); }
Expr rhou(int i) { return field(momentum(i)); }
Expr rhoE() { return field(Field::RhoE); }
Expr u(int i) { return field(velocity(i)); }
Expr p() { return field(Field::P); }
Expr temp() { return field(Field::T); }

// Viscous bracket of the momentum equation for component i:
//   sum_j d2u_i/dx_j^2 + sum_j d2u_j/dx_i dx_j - 2/3 sum_k d2u_k/dx_i dx_k
Expr viscous_bracket(int i)
{
    std::vector<Expr> terms;
    for (int j = 0; j < 3; ++j) terms.push_back(lap(u(i), j));
    for (int j = 0; j < 3; ++j) terms.push_back(mixed(u(j), i, j));
    for (int k = 0; k < 3; ++k) terms.push_back(mul({rational(-2, 3), mixed(u(k), i, k)}));
    return add(terms);
}

Expr mass_residual()
{
    std::vector<Expr> t;
    for (int j = 0; j < 3; ++j) t.push_back(d1(rhou(j), j));
    for (int j = 0; j < 3; ++j) t.push_back(mul({rho(), d1(u(j), j)}));
    for (int j = 0; j < 3; ++j) t.push_back(mul({u(j), d1(rho(), j)}));
    return mul({-half(), add(t)});
}

Expr momentum_residual(int i, const FlowParams& params)
{
    std::vector<Expr> conv;
    for (int j = 0; j < 3; ++j) conv.push_back(d1(mul({rhou(i), u(j)}), j));
    for (int j = 0; j < 3; ++j) conv.push_back(mul({rhou(i), d1(u(j), j)}));
    for (int j = 0; j < 3; ++j) conv.push_back(mul({u(j), d1(rhou(i), j)}));
    return add({mul({-half(), add(conv)}),
                neg(d1(p(), i)),
                mul({constant(params.inv_re()), viscous_bracket(i)})});
}

Expr energy_residual(const FlowParams& params)
{
    // Convective signs as printed in the skew-symmetric energy equation.
    std::vector<Expr> conv;
    for (int j = 0; j < 3; ++j) conv.push_back(mul({rhoE(), d1(u(j), j)}));
    for (int j = 0; j < 3; ++j) conv.push_back(neg(mul({u(j), d1(rhoE(), j)})));
    for (int j = 0; j < 3; ++j) conv.push_back(neg(d1(mul({rhoE(), u(j)}), j)));

    std::vector<Expr> terms;
    terms.push_back(mul({-half(), add(conv)}));
    for (int j = 0; j < 3; ++j) terms.push_back(neg(d1(mul({p(), u(j)}), j)));

    const Expr inv_re = constant(params.inv_re());
    for (int i = 0; i < 3; ++i) terms.push_back(mul({inv_re, u(i), viscous_bracket(i)}));

    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            std::vector<Expr> inner{d1(u(i), j), d1(u(j), i)};
            if (i == j) {
                for (int k = 0; k < 3; ++k) inner.push_back(mul({rational(-2, 3), d1(u(k), k)}));
            }
            terms.push_back(mul({inv_re, d1(u(i), j), add(inner)}));
        }
    }

    const Expr kappa = constant(params.heat_coeff());
    for (int j = 0; j < 3; ++j) terms.push_back(mul({kappa, lap(temp(), j)}));
    return add(terms);
}

int lowest_velocity(const Expr& e)
{
    int lowest = -1;
    for_each_node(e, [&](const Expr& x) {
        if (x.kind() != Kind::FieldRef) return;
        int v = velocity_index(x->field);
        if (v >= 0 && (lowest < 0 || v < lowest)) lowest = v;
    });
    return lowest;
}

} // namespace

void FlowParams::validate() const
{
    if (!(reynolds > 0.0)) throw InputError("Reynolds number must be positive");
    if (!(prandtl > 0.0)) throw InputError("Prandtl number must be positive");
    if (!(mach > 0.0)) throw InputError("Mach number must be positive");
    if (!(gamma > 1.0)) throw InputError("gamma must exceed 1");
}

Expr PrimitiveSet::expanded(Field f) const
{
    std::vector<Expr> values(locals.size());
    auto subst = [&](const Expr& e) {
        return rewrite(e, [&](const Expr& x) -> std::optional<Expr> {
            if (x.kind() != Kind::LocalRef) return std::nullopt;
            return values.at(static_cast<std::size_t>(x->id));
        });
    };
    for (const Local& l : locals) values.at(static_cast<std::size_t>(l.id)) = subst(l.value);
    for (const Output& o : outputs) {
        if (o.field == f) return subst(o.value);
    }
    throw StructuralError("no primitive definition for " + std::string(field_name(f)));
}

PrimitiveSet build_primitives(const FlowParams& params)
{
    params.validate();
    PrimitiveSet ps;
    ps.locals.push_back({0, div(rational(1), rho())});
    for (int i = 0; i < 3; ++i) ps.locals.push_back({1 + i, mul({rhou(i), local(0)})});
    // p = (gamma - 1) (rhoE - 1/2 rho (u0^2 + u1^2 + u2^2))
    Expr usq = add({pow(local(1), 2), pow(local(2), 2), pow(local(3), 2)});
    ps.locals.push_back(
        {4, mul({constant(params.gamma - 1.0), add({rhoE(), mul({-half(), rho(), usq})})})});

    for (int i = 0; i < 3; ++i) ps.outputs.push_back({velocity(i), local(1 + i)});
    ps.outputs.push_back({Field::P, local(4)});
    // T = gamma M^2 p / rho
    ps.outputs.push_back({Field::T, mul({constant(params.gamma_m2()), local(4), local(0)})});
    return ps;
}

Expr DerivativeInfo::inner() const
{
    if (!mixed) throw StructuralError("inner() on a non-mixed derivative");
    return derivative(node->children[0], {node->axes[1]});
}

EquationSet build_equations(const FlowParams& params)
{
    params.validate();
    EquationSet eq;
    eq.params = params;
    eq.primitives = build_primitives(params);
    eq.residuals[0] = mass_residual();
    for (int i = 0; i < 3; ++i) eq.residuals[static_cast<std::size_t>(1 + i)] = momentum_residual(i, params);
    eq.residuals[4] = energy_residual(params);
    eq.derivatives = enumerate_derivatives(eq);
    return eq;
}

std::vector<DerivativeInfo> enumerate_derivatives(const EquationSet& eqset)
{
    std::vector<DerivativeInfo> out;
    std::unordered_set<Expr, ExprHash, ExprEqual> seen;
    for (const Expr& r : eqset.residuals) {
        for_each_node(r, [&](const Expr& x) {
            if (x.kind() != Kind::Derivative || seen.contains(x)) return;
            seen.insert(x);
            DerivativeInfo info;
            info.node = x;
            const Expr& operand = x->children[0];
            info.mixed = x->axes.size() == 2 && x->composed;
            info.velocity_gradient = x->axes.size() == 1 && operand.kind() == Kind::FieldRef &&
                                     velocity_index(operand->field) >= 0 &&
                                     operand->offset == Offset{0, 0, 0};
            info.velocity_group = lowest_velocity(operand);
            out.push_back(std::move(info));
        });
    }
    return out;
}

} // namespace fdlab::ns
