#include "fdlab/kernelplan.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace fdlab::plan {

using namespace fdlab::expr;
using ns::DerivativeInfo;

namespace {

enum class Placement { Work, Local, Inline };

Placement place(Variant v, const DerivativeInfo& d)
{
    switch (v) {
    case Variant::BL: return Placement::Work;
    case Variant::RS: return d.velocity_gradient ? Placement::Work : Placement::Inline;
    case Variant::SS: return d.velocity_gradient ? Placement::Work : Placement::Local;
    case Variant::RA: return Placement::Inline;
    case Variant::SN:
    case Variant::SN2: return Placement::Local;
    }
    throw StructuralError("unknown storage policy");
}

using DerivIndex = std::unordered_map<Expr, int, ExprHash, ExprEqual>;

std::set<RefKey> distinct_refs(std::initializer_list<const Expr*> exprs)
{
    std::set<RefKey> keys;
    for (const Expr* e : exprs) {
        for_each_node(*e, [&](const Expr& x) {
            if (x.kind() == Kind::FieldRef || x.kind() == Kind::WorkRef) keys.insert(RefKey::of(*x));
        });
    }
    return keys;
}

void collect_refs(const Expr& e, std::set<RefKey>& keys)
{
    for_each_node(e, [&](const Expr& x) {
        if (x.kind() == Kind::FieldRef || x.kind() == Kind::WorkRef) keys.insert(RefKey::of(*x));
    });
}

} // namespace

std::string_view variant_name(Variant v)
{
    switch (v) {
    case Variant::BL: return "BL";
    case Variant::RS: return "RS";
    case Variant::SS: return "SS";
    case Variant::RA: return "RA";
    case Variant::SN: return "SN";
    case Variant::SN2: return "SN2";
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view s)
{
    std::string up(s);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    for (Variant v : kAllVariants) {
        if (variant_name(v) == up) return v;
    }
    return std::nullopt;
}

KernelPlan build_plan(const ns::EquationSet& eqset, Variant policy, const std::array<double, 3>& h)
{
    const auto& derivs = eqset.derivatives;
    const auto n_grad = std::count_if(derivs.begin(), derivs.end(),
                                      [](const DerivativeInfo& d) { return d.velocity_gradient; });
    if (static_cast<int>(derivs.size()) != ns::kExpectedDerivatives || n_grad != ns::kVelocityGradients) {
        throw StructuralError("equation set has " + std::to_string(derivs.size()) + " derivatives (" +
                              std::to_string(n_grad) + " velocity gradients); expected 63 (9)");
    }

    KernelPlan plan;
    plan.variant = policy;
    plan.h = h;
    for (const auto& l : eqset.primitives.locals) plan.primitive_locals.push_back({l.id, l.value});
    for (const auto& o : eqset.primitives.outputs) plan.primitive_outputs.push_back({o.field, o.value});

    DerivIndex index;
    std::vector<Placement> placement;
    for (std::size_t i = 0; i < derivs.size(); ++i) {
        index.emplace(derivs[i].node, static_cast<int>(i));
        placement.push_back(place(policy, derivs[i]));
    }

    // Work-array ids: non-mixed entries in enumeration order, then mixed ones
    // (a mixed entry may read a gradient array, which must exist first).
    std::vector<int> work_order;
    for (std::size_t i = 0; i < derivs.size(); ++i) {
        if (placement[i] == Placement::Work && !derivs[i].mixed) work_order.push_back(static_cast<int>(i));
    }
    for (std::size_t i = 0; i < derivs.size(); ++i) {
        if (placement[i] == Placement::Work && derivs[i].mixed) work_order.push_back(static_cast<int>(i));
    }
    std::unordered_map<int, int> work_id; // derivative index -> array id
    for (std::size_t a = 0; a < work_order.size(); ++a) work_id[work_order[a]] = static_cast<int>(a);

    auto stored_inner = [&](const DerivativeInfo& d) -> std::optional<int> {
        if (!d.mixed) return std::nullopt;
        auto it = index.find(d.inner());
        if (it == index.end()) return std::nullopt;
        auto w = work_id.find(it->second);
        if (w == work_id.end()) return std::nullopt;
        return w->second;
    };

    // Discretized value of derivative i in this plan's context.
    auto lower = [&](int i) -> Expr {
        const DerivativeInfo& d = derivs[static_cast<std::size_t>(i)];
        if (auto w = stored_inner(d)) {
            const int axis = d.node->axes[0];
            return first_derivative_stencil(work(*w), axis, h[static_cast<std::size_t>(axis)]);
        }
        return discretize_derivative(d.node, h);
    };

    for (std::size_t a = 0; a < work_order.size(); ++a) {
        const int i = work_order[a];
        const DerivativeInfo& d = derivs[static_cast<std::size_t>(i)];
        WorkEntry entry;
        entry.array = static_cast<int>(a);
        entry.derivative = i;
        const Expr& operand = d.node->children[0];
        if (policy == Variant::BL && d.node->axes.size() == 1 && operand.kind() == Kind::Mul) {
            const int axis = d.node->axes[0];
            entry.staged = operand;
            entry.value = first_derivative_stencil(field(Field::Scratch), axis, h[static_cast<std::size_t>(axis)]);
        } else {
            entry.value = lower(i);
        }
        plan.work.push_back(std::move(entry));
    }

    std::vector<int> local_order;
    for (std::size_t i = 0; i < derivs.size(); ++i) {
        if (placement[i] == Placement::Local) local_order.push_back(static_cast<int>(i));
    }
    if (policy == Variant::SN2) {
        auto group = [&](int i) {
            int g = derivs[static_cast<std::size_t>(i)].velocity_group;
            return g < 0 ? 3 : g;
        };
        std::stable_sort(local_order.begin(), local_order.end(),
                         [&](int a, int b) { return group(a) < group(b); });
    }
    for (int i : local_order) plan.locals.push_back({i, lower(i)});

    std::unordered_map<int, Expr> inline_cache;
    for (std::size_t c = 0; c < 5; ++c) {
        plan.residuals[c] = rewrite(eqset.residuals[c], [&](const Expr& x) -> std::optional<Expr> {
            if (x.kind() != Kind::Derivative) return std::nullopt;
            auto it = index.find(x);
            if (it == index.end()) throw StructuralError("derivative missing from the census: " + dump(x, false));
            const int i = it->second;
            switch (placement[static_cast<std::size_t>(i)]) {
            case Placement::Work: return work(work_id.at(i));
            case Placement::Local: return local(i);
            case Placement::Inline: {
                auto [pos, inserted] = inline_cache.try_emplace(i);
                if (inserted) pos->second = lower(i);
                return pos->second;
            }
            }
            return std::nullopt;
        });
    }

    check_plan(plan);
    plan.counters = plan_counters(plan);
    return plan;
}

Counters plan_counters(const KernelPlan& plan)
{
    Counters c;
    c.extra_arrays = static_cast<int>(plan.work.size());
    c.locals = static_cast<int>(plan.locals.size());

    OpCounts ops;
    std::set<RefKey> prim_reads;
    for (const auto& l : plan.primitive_locals) {
        ops += count_ops(l.value);
        collect_refs(l.value, prim_reads);
    }
    for (const auto& o : plan.primitive_outputs) {
        ops += count_ops(o.value);
        collect_refs(o.value, prim_reads);
    }
    std::int64_t reads = static_cast<std::int64_t>(prim_reads.size());
    std::int64_t writes = static_cast<std::int64_t>(plan.primitive_outputs.size());

    for (const auto& w : plan.work) {
        if (w.staged) {
            ops += count_ops(*w.staged);
            reads += static_cast<std::int64_t>(distinct_refs({&*w.staged}).size());
            writes += 1;
        }
        ops += count_ops(w.value);
        reads += static_cast<std::int64_t>(distinct_refs({&w.value}).size());
        writes += 1;
    }

    std::set<RefKey> point_reads;
    for (const auto& l : plan.locals) {
        ops += count_ops(l.value);
        collect_refs(l.value, point_reads);
    }
    for (const auto& r : plan.residuals) {
        ops += count_ops(r);
        collect_refs(r, point_reads);
    }
    reads += static_cast<std::int64_t>(point_reads.size());
    writes += static_cast<std::int64_t>(plan.residuals.size());

    c.op_breakdown = ops;
    c.ops_per_point = ops.total();
    c.global_reads_per_point = reads;
    c.global_writes_per_point = writes;
    c.work_writes_per_point = static_cast<std::int64_t>(plan.work.size());
    return c;
}

void check_plan(const KernelPlan& plan)
{
    auto no_derivs = [](const Expr& e, const char* where) {
        if (contains_derivative(e)) throw StructuralError(std::string("derivative node left in ") + where);
    };

    std::unordered_set<int> prim_assigned;
    auto check_locals_in = [](const Expr& e, const std::unordered_set<int>& assigned, const char* where) {
        for_each_node(e, [&](const Expr& x) {
            if (x.kind() == Kind::LocalRef && !assigned.contains(x->id)) {
                throw StructuralError("local l" + std::to_string(x->id) + " used before assignment in " + where);
            }
        });
    };
    for (const auto& l : plan.primitive_locals) {
        no_derivs(l.value, "primitive phase");
        check_locals_in(l.value, prim_assigned, "primitive phase");
        prim_assigned.insert(l.id);
    }
    for (const auto& o : plan.primitive_outputs) {
        no_derivs(o.value, "primitive phase");
        check_locals_in(o.value, prim_assigned, "primitive phase");
    }

    std::unordered_set<int> written;
    for (const auto& w : plan.work) {
        for (const Expr* e : {w.staged ? &*w.staged : nullptr, &w.value}) {
            if (!e) continue;
            no_derivs(*e, "work phase");
            for_each_node(*e, [&](const Expr& x) {
                if (x.kind() == Kind::LocalRef) throw StructuralError("local referenced in work phase");
                if (x.kind() == Kind::WorkRef && !written.contains(x->id)) {
                    throw StructuralError("work array w" + std::to_string(x->id) + " read before it is written");
                }
            });
        }
        written.insert(w.array);
    }

    std::unordered_set<int> assigned;
    auto check_point = [&](const Expr& e) {
        no_derivs(e, "per-point phase");
        check_locals_in(e, assigned, "per-point phase");
        for_each_node(e, [&](const Expr& x) {
            if (x.kind() == Kind::WorkRef && !written.contains(x->id)) {
                throw StructuralError("work array w" + std::to_string(x->id) + " is never written");
            }
            if (x.kind() == Kind::FieldRef && x->field == Field::Scratch) {
                throw StructuralError("scratch read outside the work phase");
            }
        });
    };
    for (const auto& l : plan.locals) {
        check_point(l.value);
        if (!assigned.insert(l.id).second) throw StructuralError("local l" + std::to_string(l.id) + " assigned twice");
    }
    for (const auto& r : plan.residuals) check_point(r);
}

std::array<Expr, 5> inline_residuals(const KernelPlan& plan)
{
    std::unordered_map<int, Expr> work_values;
    for (const auto& w : plan.work) {
        Expr v = w.value;
        if (w.staged) {
            const Expr staged = *w.staged;
            v = rewrite(v, [&](const Expr& x) -> std::optional<Expr> {
                if (x.kind() != Kind::FieldRef || x->field != Field::Scratch) return std::nullopt;
                Expr s = staged;
                for (int a = 0; a < 3; ++a) {
                    if (x->offset[static_cast<std::size_t>(a)] != 0) s = shift(s, a, x->offset[static_cast<std::size_t>(a)]);
                }
                return s;
            });
        }
        // Earlier work arrays referenced by this one are already inlined.
        v = rewrite(v, [&](const Expr& x) -> std::optional<Expr> {
            if (x.kind() != Kind::WorkRef) return std::nullopt;
            Expr s = work_values.at(x->id);
            for (int a = 0; a < 3; ++a) {
                if (x->offset[static_cast<std::size_t>(a)] != 0) s = shift(s, a, x->offset[static_cast<std::size_t>(a)]);
            }
            return s;
        });
        work_values[w.array] = v;
    }

    std::unordered_map<int, Expr> local_values;
    auto subst = [&](const Expr& e) {
        return rewrite(e, [&](const Expr& x) -> std::optional<Expr> {
            if (x.kind() == Kind::LocalRef) return local_values.at(x->id);
            if (x.kind() != Kind::WorkRef) return std::nullopt;
            Expr s = work_values.at(x->id);
            for (int a = 0; a < 3; ++a) {
                if (x->offset[static_cast<std::size_t>(a)] != 0) s = shift(s, a, x->offset[static_cast<std::size_t>(a)]);
            }
            return s;
        });
    };
    for (const auto& l : plan.locals) local_values[l.id] = subst(l.value);

    std::array<Expr, 5> out;
    for (std::size_t c = 0; c < 5; ++c) out[c] = subst(plan.residuals[c]);
    return out;
}

namespace {

constexpr std::array<std::string_view, 5> kResidualNames{"rho", "rhou0", "rhou1", "rhou2", "rhoE"};

nlohmann::ordered_json counters_json(const Counters& c, std::optional<std::int64_t> grid_n)
{
    nlohmann::ordered_json j;
    j["extra_arrays"] = c.extra_arrays;
    j["locals"] = c.locals;
    j["ops_per_point"] = c.ops_per_point;
    if (grid_n) {
        j["grid_n"] = *grid_n;
        j["ops_per_timestep"] = c.ops_per_timestep(*grid_n);
    }
    j["adds"] = c.op_breakdown.adds;
    j["muls"] = c.op_breakdown.muls;
    j["divs"] = c.op_breakdown.divs;
    j["negs"] = c.op_breakdown.negs;
    j["pows"] = c.op_breakdown.pows;
    j["global_reads_per_point"] = c.global_reads_per_point;
    j["global_writes_per_point"] = c.global_writes_per_point;
    j["work_writes_per_point"] = c.work_writes_per_point;
    return j;
}

} // namespace

std::string dump_plan(const KernelPlan& plan, std::optional<std::int64_t> grid_n)
{
    nlohmann::ordered_json doc;
    doc["variant"] = variant_name(plan.variant);
    doc["spacing"] = plan.h;
    doc["counters"] = counters_json(plan.counters, grid_n);

    nlohmann::ordered_json prim;
    prim["locals"] = nlohmann::ordered_json::array();
    for (const auto& l : plan.primitive_locals) {
        prim["locals"].push_back({{"id", l.id}, {"expr", dump(l.value, false)}});
    }
    prim["outputs"] = nlohmann::ordered_json::array();
    for (const auto& o : plan.primitive_outputs) {
        prim["outputs"].push_back({{"field", field_name(o.field)}, {"expr", dump(o.value, false)}});
    }
    doc["primitive_phase"] = prim;

    doc["work_phase"] = nlohmann::ordered_json::array();
    for (const auto& w : plan.work) {
        nlohmann::ordered_json e;
        e["array"] = w.array;
        e["derivative"] = w.derivative;
        if (w.staged) e["staged"] = dump(*w.staged, false);
        e["expr"] = dump(w.value, false);
        doc["work_phase"].push_back(e);
    }

    nlohmann::ordered_json point;
    point["locals"] = nlohmann::ordered_json::array();
    for (const auto& l : plan.locals) point["locals"].push_back({{"id", l.id}, {"expr", dump(l.value, false)}});
    doc["per_point_phase"] = point;

    doc["residuals"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < 5; ++c) {
        doc["residuals"].push_back({{"component", kResidualNames[c]}, {"expr", dump(plan.residuals[c], false)}});
    }
    return doc.dump(2) + "\n";
}

Counters parse_counters(std::string_view dump_text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(dump_text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed plan dump: ") + e.what());
    }
    const auto& j = doc.at("counters");
    Counters c;
    c.extra_arrays = j.at("extra_arrays").get<int>();
    c.locals = j.at("locals").get<int>();
    c.ops_per_point = j.at("ops_per_point").get<std::int64_t>();
    c.op_breakdown.adds = j.at("adds").get<std::int64_t>();
    c.op_breakdown.muls = j.at("muls").get<std::int64_t>();
    c.op_breakdown.divs = j.at("divs").get<std::int64_t>();
    c.op_breakdown.negs = j.at("negs").get<std::int64_t>();
    c.op_breakdown.pows = j.at("pows").get<std::int64_t>();
    c.global_reads_per_point = j.at("global_reads_per_point").get<std::int64_t>();
    c.global_writes_per_point = j.at("global_writes_per_point").get<std::int64_t>();
    c.work_writes_per_point = j.at("work_writes_per_point").get<std::int64_t>();
    return c;
}

} // namespace fdlab::plan
