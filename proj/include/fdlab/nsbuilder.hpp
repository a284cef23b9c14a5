#pragma once

// Symbolic residuals of the compressible Navier-Stokes equations in the
// skew-symmetric convective form with Laplacian viscous terms.

#include "fdlab/exprir.hpp"

#include <array>
#include <vector>

namespace fdlab::ns {

struct FlowParams {
    double reynolds = 1600.0;
    double prandtl = 0.71;
    double mach = 0.1;
    double gamma = 1.4;

    // Throws InputError unless Re, Pr, M > 0 and gamma > 1.
    void validate() const;

    double inv_re() const { return 1.0 / reynolds; }
    // Heat conduction coefficient 1 / ((gamma - 1) M^2 Pr Re).
    double heat_coeff() const { return 1.0 / ((gamma - 1.0) * mach * mach * prandtl * reynolds); }
    double gamma_m2() const { return gamma * mach * mach; }
    double inv_gamma_m2() const { return 1.0 / (gamma * mach * mach); }
};

// Per-point primitive evaluation. Locals live in their own scope:
// l0 = 1/rho, l1..l3 = u_i, l4 = p.
struct PrimitiveSet {
    struct Local {
        int id;
        expr::Expr value;
    };
    struct Output {
        expr::Field field;
        expr::Expr value;
    };
    std::vector<Local> locals;
    std::vector<Output> outputs; // u0, u1, u2, p, T in that order

    // Output expression of `f` with all locals substituted, written purely in
    // terms of conserved fields.
    expr::Expr expanded(expr::Field f) const;
};

PrimitiveSet build_primitives(const FlowParams& params);

struct DerivativeInfo {
    expr::Expr node;            // the Derivative node
    bool velocity_gradient = false;
    int velocity_group = -1;    // lowest i with u_i in the operand, -1 if none
    bool mixed = false;         // two axes, nested first differences

    // For mixed derivatives: the first derivative applied first (the inner
    // d/dx_{axes[1]} of the same operand).
    expr::Expr inner() const;
};

struct EquationSet {
    FlowParams params;
    PrimitiveSet primitives;
    // rho, rho u0, rho u1, rho u2, rho E
    std::array<expr::Expr, 5> residuals;
    std::vector<DerivativeInfo> derivatives;
};

inline constexpr int kExpectedDerivatives = 63;
inline constexpr int kVelocityGradients = 9;

EquationSet build_equations(const FlowParams& params);

// Distinct Derivative nodes in first-occurrence order (mass, momentum 0..2,
// energy; pre-order within each residual).
std::vector<DerivativeInfo> enumerate_derivatives(const EquationSet& eqset);

} // namespace fdlab::ns
