#pragma once

// Storage-policy lowering of an EquationSet into an executable KernelPlan.
//
// A plan has three phases evaluated once per Runge-Kutta stage:
//   1. primitive phase: u_i, p, T into global arrays (identical for all
//      variants),
//   2. work-array phase: derivatives stored to grid-sized work arrays, each
//      entry its own sweep over the grid,
//   3. per-point phase: per-point locals followed by the five residuals.

#include "fdlab/exprir.hpp"
#include "fdlab/nsbuilder.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fdlab::plan {

enum class Variant { BL, RS, SS, RA, SN, SN2 };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::BL, Variant::RS, Variant::SS,
                                                     Variant::RA, Variant::SN, Variant::SN2};

std::string_view variant_name(Variant v);        // "BL", "RS", ...
std::optional<Variant> parse_variant(std::string_view s); // case-insensitive

struct LocalAssign {
    int id;
    expr::Expr value;
};

struct FieldAssign {
    expr::Field field;
    expr::Expr value;
};

struct WorkEntry {
    int array = 0;          // dense work-array id
    int derivative = 0;     // index into EquationSet::derivatives
    // When set, the operand is first evaluated into the scratch array (and
    // halo-exchanged); `value` then reads Field::Scratch.
    std::optional<expr::Expr> staged;
    expr::Expr value;
};

struct Counters {
    int extra_arrays = 0;
    int locals = 0;
    std::int64_t ops_per_point = 0;
    std::int64_t global_reads_per_point = 0;
    std::int64_t global_writes_per_point = 0;
    std::int64_t work_writes_per_point = 0;
    expr::OpCounts op_breakdown;

    // ops_per_point x N^3 x 3 Runge-Kutta stages
    std::int64_t ops_per_timestep(std::int64_t n) const { return ops_per_point * n * n * n * 3; }

    bool operator==(const Counters&) const = default;
};

struct KernelPlan {
    Variant variant = Variant::BL;
    std::array<double, 3> h{};
    std::vector<LocalAssign> primitive_locals;
    std::vector<FieldAssign> primitive_outputs;
    std::vector<WorkEntry> work;
    std::vector<LocalAssign> locals;
    std::array<expr::Expr, 5> residuals;
    Counters counters;
};

// Lowers eqset under the given policy for a uniform grid with spacing h.
// Throws StructuralError if the equation set does not have the expected
// derivative census or if a local would be used before assignment.
KernelPlan build_plan(const ns::EquationSet& eqset, Variant policy, const std::array<double, 3>& h);

// Recomputes the per-point counters from the plan's phases.
Counters plan_counters(const KernelPlan& plan);

// Topological checks: locals assigned before use; every work array read in
// the per-point phase written in the work phase; no Derivative nodes left.
void check_plan(const KernelPlan& plan);

// Fully substituted residuals (locals, work arrays and the scratch staging
// inlined) in terms of conserved and primitive field references only.
std::array<expr::Expr, 5> inline_residuals(const KernelPlan& plan);

// Deterministic JSON document with phases, expressions and counters. When
// grid_n is given, ops_per_timestep for that size is included.
std::string dump_plan(const KernelPlan& plan, std::optional<std::int64_t> grid_n = std::nullopt);

// Parses the "counters" section of a dump back.
Counters parse_counters(std::string_view dump);

} // namespace fdlab::plan
