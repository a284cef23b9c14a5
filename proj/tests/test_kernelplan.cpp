#include "fdlab/kernelplan.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace fdlab;
using namespace fdlab::expr;
using plan::Variant;

namespace {

const std::array<double, 3> kH{0.19634954084936207, 0.19634954084936207, 0.19634954084936207};

const ns::EquationSet& equations()
{
    static const ns::EquationSet eq = ns::build_equations({});
    return eq;
}

const plan::KernelPlan& plan_for(Variant v)
{
    static std::map<Variant, plan::KernelPlan> cache;
    auto it = cache.find(v);
    if (it == cache.end()) it = cache.emplace(v, plan::build_plan(equations(), v, kH)).first;
    return it->second;
}

// Deterministic pseudo-random value per (field, offset).
double pseudo_value(const RefKey& k)
{
    std::uint64_t s = static_cast<std::uint64_t>(k.field) * 1000003u;
    for (int o : k.offset) s = s * 131u + static_cast<std::uint64_t>(o + 8);
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    return u(rng);
}

} // namespace

TEST(VariantNames, RoundTrip)
{
    for (Variant v : plan::kAllVariants) {
        EXPECT_EQ(plan::parse_variant(plan::variant_name(v)), v);
    }
    EXPECT_EQ(plan::parse_variant("sn2"), Variant::SN2);
    EXPECT_FALSE(plan::parse_variant("xx").has_value());
}

TEST(Counters, ExtraArraysAndLocals)
{
    const std::map<Variant, std::pair<int, int>> expected{{Variant::BL, {63, 0}}, {Variant::RS, {9, 0}},
                                                          {Variant::SS, {9, 54}}, {Variant::RA, {0, 0}},
                                                          {Variant::SN, {0, 63}}, {Variant::SN2, {0, 63}}};
    for (const auto& [v, ac] : expected) {
        EXPECT_EQ(plan_for(v).counters.extra_arrays, ac.first) << plan::variant_name(v);
        EXPECT_EQ(plan_for(v).counters.locals, ac.second) << plan::variant_name(v);
    }
}

TEST(Counters, OperationOrdering)
{
    auto ops = [](Variant v) { return plan_for(v).counters.ops_per_point; };
    EXPECT_LT(ops(Variant::BL), ops(Variant::SS));
    EXPECT_LT(ops(Variant::SS), ops(Variant::RS));
    EXPECT_LE(ops(Variant::RS), ops(Variant::SN));
    EXPECT_EQ(ops(Variant::SN), ops(Variant::SN2));
    EXPECT_LT(ops(Variant::SN), ops(Variant::RA));
    const double ratio = static_cast<double>(ops(Variant::RA)) / static_cast<double>(ops(Variant::BL));
    EXPECT_GE(ratio, 2.2);
    EXPECT_LE(ratio, 4.0);
}

TEST(Counters, RecomputationCostOfInlinedDerivatives)
{
    // RS re-evaluates each non-gradient derivative at every use; SS evaluates
    // it once into a local. Stencil cost: 4 multiplies + 3 adds for a first
    // derivative (also of a stored gradient), 5 + 4 for a second derivative.
    const auto& eq = equations();
    std::int64_t extra = 0;
    for (const auto& d : eq.derivatives) {
        if (d.velocity_gradient) continue;
        int uses = 0;
        for (const Expr& r : eq.residuals) {
            for_each_node(r, [&](const Expr& x) {
                if (x.kind() == Kind::Derivative && structurally_equal(x, d.node)) ++uses;
            });
        }
        const bool second = d.node->axes.size() == 2 && !d.mixed;
        extra += static_cast<std::int64_t>(uses - 1) * (second ? 9 : 7);
    }
    EXPECT_EQ(plan_for(Variant::RS).counters.ops_per_point - plan_for(Variant::SS).counters.ops_per_point, extra);
}

TEST(Counters, WritesPerPoint)
{
    // 5 primitive outputs + work arrays (+ 15 staged products for BL) + 5 residuals
    EXPECT_EQ(plan_for(Variant::BL).counters.global_writes_per_point, 5 + 63 + 15 + 5);
    EXPECT_EQ(plan_for(Variant::RS).counters.global_writes_per_point, 5 + 9 + 5);
    EXPECT_EQ(plan_for(Variant::SS).counters.global_writes_per_point, 5 + 9 + 5);
    for (Variant v : {Variant::RA, Variant::SN, Variant::SN2}) {
        EXPECT_EQ(plan_for(v).counters.global_writes_per_point, 10);
    }
}

TEST(Counters, OpsPerTimestep)
{
    const auto& c = plan_for(Variant::BL).counters;
    EXPECT_EQ(c.ops_per_timestep(32), c.ops_per_point * 32 * 32 * 32 * 3);
}

TEST(Plan, NoDerivativesLeftAndChecksPass)
{
    for (Variant v : plan::kAllVariants) {
        const auto& p = plan_for(v);
        EXPECT_NO_THROW(plan::check_plan(p));
        for (const Expr& r : p.residuals) EXPECT_FALSE(contains_derivative(r));
        EXPECT_EQ(plan::plan_counters(p), p.counters);
    }
}

TEST(Plan, WorkArraysOnlyForStoringVariants)
{
    EXPECT_EQ(plan_for(Variant::BL).work.size(), 63u);
    for (const auto& w : plan_for(Variant::RS).work) {
        EXPECT_TRUE(equations().derivatives[static_cast<std::size_t>(w.derivative)].velocity_gradient);
    }
    EXPECT_TRUE(plan_for(Variant::RA).work.empty());
    EXPECT_TRUE(plan_for(Variant::RA).locals.empty());
}

TEST(Plan, UseBeforeAssignIsRejected)
{
    plan::KernelPlan p = plan_for(Variant::SN);
    std::swap(p.locals.front(), p.locals.back());
    p.residuals[0] = add({p.residuals[0], local(p.locals.front().id)});
    p.locals.front().value = add({p.locals.front().value, local(p.locals.back().id)});
    EXPECT_THROW(plan::check_plan(p), StructuralError);
}

TEST(Plan, UnwrittenWorkArrayIsRejected)
{
    plan::KernelPlan p = plan_for(Variant::RS);
    p.work.pop_back();
    EXPECT_THROW(plan::check_plan(p), StructuralError);
}

TEST(Plan, WrongCensusIsRejected)
{
    ns::EquationSet eq = equations();
    eq.derivatives.pop_back();
    EXPECT_THROW(plan::build_plan(eq, Variant::BL, kH), StructuralError);
}

TEST(Plan, SnAndSn2DifferOnlyInLocalOrder)
{
    const auto& sn = plan_for(Variant::SN);
    const auto& sn2 = plan_for(Variant::SN2);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(dump(sn.residuals[c], false), dump(sn2.residuals[c], false));
    std::multiset<std::string> a;
    std::multiset<std::string> b;
    bool same_order = true;
    for (std::size_t i = 0; i < sn.locals.size(); ++i) {
        a.insert(std::to_string(sn.locals[i].id) + dump(sn.locals[i].value, false));
        b.insert(std::to_string(sn2.locals[i].id) + dump(sn2.locals[i].value, false));
        same_order = same_order && sn.locals[i].id == sn2.locals[i].id;
    }
    EXPECT_EQ(a, b);
    EXPECT_FALSE(same_order);

    // Groups by velocity component appear in ascending order, ungrouped last.
    int last = 0;
    for (const auto& l : sn2.locals) {
        int g = equations().derivatives[static_cast<std::size_t>(l.id)].velocity_group;
        if (g < 0) g = 3;
        EXPECT_GE(g, last);
        last = g;
    }
}

TEST(Plan, InlinedResidualsAgreeAcrossVariants)
{
    Bindings b;
    b.set_resolver([](const RefKey& k) -> std::optional<double> {
        if (k.kind != Kind::FieldRef) return std::nullopt;
        return pseudo_value(k);
    });
    std::array<double, 5> ref{};
    const auto bl = plan::inline_residuals(plan_for(Variant::BL));
    for (std::size_t c = 0; c < 5; ++c) ref[c] = evaluate(bl[c], b);
    for (Variant v : plan::kAllVariants) {
        const auto r = plan::inline_residuals(plan_for(v));
        for (std::size_t c = 0; c < 5; ++c) {
            EXPECT_NEAR(evaluate(r[c], b), ref[c], 1e-11 * std::max(1.0, std::abs(ref[c])))
                << plan::variant_name(v) << " component " << c;
        }
    }
}

TEST(Plan, InlinedResidualsMatchDiscretizedEquations)
{
    Bindings b;
    b.set_resolver([](const RefKey& k) -> std::optional<double> { return pseudo_value(k); });
    const auto r = plan::inline_residuals(plan_for(Variant::RA));
    for (std::size_t c = 0; c < 5; ++c) {
        const double expected = evaluate(discretize(equations().residuals[c], kH), b);
        EXPECT_NEAR(evaluate(r[c], b), expected, 1e-11 * std::max(1.0, std::abs(expected)));
    }
}

TEST(Dump, DeterministicAndParseable)
{
    for (Variant v : plan::kAllVariants) {
        const std::string a = plan::dump_plan(plan_for(v), 32);
        const std::string b = plan::dump_plan(plan::build_plan(equations(), v, kH), 32);
        EXPECT_EQ(a, b);
        EXPECT_EQ(plan::parse_counters(a), plan_for(v).counters);
        const auto j = nlohmann::json::parse(a);
        EXPECT_EQ(j["variant"], std::string(plan::variant_name(v)));
        EXPECT_EQ(j["counters"]["ops_per_timestep"].get<std::int64_t>(),
                  plan_for(v).counters.ops_per_timestep(32));
    }
}
