#include "fdlab/gridexec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fdlab::grid {

using expr::Expr;
using expr::Field;
using expr::Kind;

namespace {

constexpr int kBatch = 64;

// Neumaier compensated accumulator.
struct CompensatedSum {
    double sum = 0.0;
    double c = 0.0;
    void add(double x)
    {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + c; }
};

std::string point_text(const Grid& g, std::size_t linear)
{
    const auto p = static_cast<std::size_t>(g.padded());
    const int i = static_cast<int>(linear % p) - kHalo;
    const int j = static_cast<int>((linear / p) % p) - kHalo;
    const int k = static_cast<int>(linear / (p * p)) - kHalo;
    return "(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ")";
}

} // namespace

// ---------------------------------------------------------------------------
// Grid / FieldStore
// ---------------------------------------------------------------------------
Grid::Grid(int n) : n_(n), padded_(n + 2 * kHalo), h_(0.0)
{
    if (n < kMinPoints) {
        throw InputError("grid needs at least " + std::to_string(kMinPoints) + " points per axis, got " +
                         std::to_string(n));
    }
    h_ = 2.0 * M_PI / static_cast<double>(n);
}

FieldStore::FieldStore(const Grid& g)
{
    for (auto* group : {&solution, &saved, &primitive, &residual}) {
        for (Array& a : *group) a.assign(g.padded_size(), 0.0);
    }
}

Array& FieldStore::array(Field f)
{
    const int i = static_cast<int>(f);
    if (expr::is_conserved(f)) return solution[static_cast<std::size_t>(i)];
    if (expr::is_primitive(f)) return primitive[static_cast<std::size_t>(i - static_cast<int>(Field::U0))];
    return scratch;
}

const Array& FieldStore::array(Field f) const { return const_cast<FieldStore*>(this)->array(f); }

void halo_exchange_periodic(Array& a, const Grid& g)
{
    const int n = g.n();
    const int p = g.padded();
    auto at = [&](int i, int j, int k) -> double& {
        return a[static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(p) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(p) * static_cast<std::size_t>(k))];
    };
    for (int k = kHalo; k < kHalo + n; ++k) {
        for (int j = kHalo; j < kHalo + n; ++j) {
            for (int h = 0; h < kHalo; ++h) {
                at(h, j, k) = at(h + n, j, k);
                at(kHalo + n + h, j, k) = at(kHalo + h, j, k);
            }
        }
    }
    for (int k = kHalo; k < kHalo + n; ++k) {
        for (int h = 0; h < kHalo; ++h) {
            for (int i = 0; i < p; ++i) {
                at(i, h, k) = at(i, h + n, k);
                at(i, kHalo + n + h, k) = at(i, kHalo + h, k);
            }
        }
    }
    for (int h = 0; h < kHalo; ++h) {
        for (int j = 0; j < p; ++j) {
            for (int i = 0; i < p; ++i) {
                at(i, j, h) = at(i, j, h + n);
                at(i, j, kHalo + n + h) = at(i, j, kHalo + h);
            }
        }
    }
}

double grid_sum(const Array& a, const Grid& g)
{
    CompensatedSum s;
    const int n = g.n();
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            const std::size_t base = g.index(0, j, k);
            for (int i = 0; i < n; ++i) s.add(a[base + static_cast<std::size_t>(i)]);
        }
    }
    return s.value();
}

Diagnostics integral_diagnostics(const FieldStore& store, const Grid& g)
{
    const int n = g.n();
    const Array& rho = store.solution[0];
    std::array<Array, 3> vel;
    for (Array& v : vel) v.assign(g.padded_size(), 0.0);

    CompensatedSum ke;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = g.index(i, j, k);
                double m2 = 0.0;
                for (std::size_t c = 0; c < 3; ++c) {
                    const double m = store.solution[1 + c][idx];
                    vel[c][idx] = m / rho[idx];
                    m2 += m * m;
                }
                ke.add(0.5 * m2 / rho[idx]);
            }
        }
    }
    for (Array& v : vel) halo_exchange_periodic(v, g);

    const auto c1 = expr::StencilCoeffs::first(g.h());
    double max_div = 0.0;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                double div = 0.0;
                for (int axis = 0; axis < 3; ++axis) {
                    double d = 0.0;
                    for (int s = -2; s <= 2; ++s) {
                        if (s == 0) continue;
                        expr::Offset o{0, 0, 0};
                        o[static_cast<std::size_t>(axis)] = s;
                        d += c1.scaled(s) * vel[static_cast<std::size_t>(axis)][g.index(i + o[0], j + o[1], k + o[2])];
                    }
                    div += d;
                }
                max_div = std::max(max_div, std::abs(div));
            }
        }
    }

    Diagnostics d;
    d.total_mass = grid_sum(rho, g) * g.h() * g.h() * g.h();
    d.mean_kinetic = ke.value() / static_cast<double>(g.interior_size());
    d.max_divergence = max_div;
    return d;
}

// ---------------------------------------------------------------------------
// WorkerPool
// ---------------------------------------------------------------------------
WorkerPool::WorkerPool(int workers)
{
    if (workers < 1) throw InputError("worker count must be at least 1");
    for (int w = 1; w < workers; ++w) threads_.emplace_back([this, w] { loop(w); });
}

WorkerPool::~WorkerPool()
{
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_start_.notify_all();
    for (auto& t : threads_) t.join();
}

void WorkerPool::loop(int worker)
{
    std::uint64_t seen = 0;
    for (;;) {
        const std::function<void(int, int)>* job = nullptr;
        {
            std::unique_lock lock(mu_);
            cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            job = job_;
        }
        std::exception_ptr err;
        try {
            (*job)(worker, size());
        } catch (...) {
            err = std::current_exception();
        }
        {
            std::lock_guard lock(mu_);
            if (err && !error_) error_ = err;
            if (--pending_ == 0) cv_done_.notify_all();
        }
    }
}

void WorkerPool::run(const std::function<void(int, int)>& fn)
{
    if (threads_.empty()) {
        fn(0, 1);
        return;
    }
    {
        std::lock_guard lock(mu_);
        job_ = &fn;
        pending_ = static_cast<int>(threads_.size());
        error_ = nullptr;
        ++generation_;
    }
    cv_start_.notify_all();
    std::exception_ptr local;
    try {
        fn(0, size());
    } catch (...) {
        local = std::current_exception();
    }
    std::unique_lock lock(mu_);
    cv_done_.wait(lock, [&] { return pending_ == 0; });
    if (local) std::rethrow_exception(local);
    if (error_) std::rethrow_exception(error_);
}

// ---------------------------------------------------------------------------
// Kernel
// ---------------------------------------------------------------------------
Kernel::Kernel(std::span<const plan::LocalAssign> locals, std::span<const Store> stores, const Grid& g)
{
    for (const auto& l : locals) {
        int r = compile(l.value, g);
        if (pinned_[static_cast<std::size_t>(r)]) {
            const int copy = new_reg();
            code_.push_back({Op::Copy, copy, r, 0, 0});
            r = copy;
        }
        pinned_[static_cast<std::size_t>(r)] = true;
        local_regs_[l.id] = r;
    }
    for (const auto& s : stores) {
        const int r = compile(s.value, g);
        Slot::Kind kind = s.target == Store::Target::Field    ? Slot::Kind::Field
                          : s.target == Store::Target::Work   ? Slot::Kind::Work
                                                              : Slot::Kind::Residual;
        code_.push_back({Op::Store, slot_for(kind, s.index), r, 0, 0});
        release(r);
    }
    std::sort(work_offset_reads_.begin(), work_offset_reads_.end());
    work_offset_reads_.erase(std::unique(work_offset_reads_.begin(), work_offset_reads_.end()), work_offset_reads_.end());
}

int Kernel::new_reg()
{
    if (!free_regs_.empty()) {
        const int r = free_regs_.back();
        free_regs_.pop_back();
        return r;
    }
    pinned_.push_back(false);
    return num_regs_++;
}

void Kernel::release(int reg)
{
    if (!pinned_[static_cast<std::size_t>(reg)]) free_regs_.push_back(reg);
}

int Kernel::slot_for(Slot::Kind kind, int index)
{
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        if (slots_[s].kind == kind && slots_[s].index == index) return static_cast<int>(s);
    }
    slots_.push_back({kind, index});
    return static_cast<int>(slots_.size() - 1);
}

int Kernel::compile(const Expr& e, const Grid& g)
{
    const auto& ch = e->children;
    switch (e.kind()) {
    case Kind::Constant:
    case Kind::Rational: {
        const double v = e.kind() == Kind::Constant ? e->value
                                                    : static_cast<double>(e->num) / static_cast<double>(e->den);
        for (std::size_t c = 0; c < constant_regs_.size(); ++c) {
            if (std::bit_cast<std::uint64_t>(constants_[c]) == std::bit_cast<std::uint64_t>(v)) {
                return constant_regs_[c];
            }
        }
        // Constants are filled once per run, so they never reuse a temporary.
        const int r = num_regs_++;
        pinned_.push_back(true);
        constant_regs_.push_back(r);
        constants_.push_back(v);
        return r;
    }
    case Kind::FieldRef:
    case Kind::WorkRef: {
        const bool is_work = e.kind() == Kind::WorkRef;
        const bool offset = e->offset != expr::Offset{0, 0, 0};
        if (is_work && offset) work_offset_reads_.push_back(e->id);
        if (!is_work && e->field == Field::Scratch && offset) scratch_offset_read_ = true;
        const int slot = is_work ? slot_for(Slot::Kind::Work, e->id)
                                 : slot_for(Slot::Kind::Field, static_cast<int>(e->field));
        const int r = new_reg();
        code_.push_back({Op::Load, r, slot, 0, g.linear_offset(e->offset)});
        return r;
    }
    case Kind::LocalRef: {
        auto it = local_regs_.find(e->id);
        if (it == local_regs_.end()) throw StructuralError("local l" + std::to_string(e->id) + " not assigned");
        return it->second;
    }
    case Kind::Neg: {
        const int a = compile(ch[0], g);
        release(a);
        const int r = new_reg();
        code_.push_back({Op::Neg, r, a, 0, 0});
        return r;
    }
    case Kind::Add:
    case Kind::Mul:
    case Kind::Div: {
        const Op op = e.kind() == Kind::Add ? Op::Add : e.kind() == Kind::Mul ? Op::Mul : Op::Div;
        int acc = compile(ch[0], g);
        for (std::size_t i = 1; i < ch.size(); ++i) {
            const int b = compile(ch[i], g);
            release(acc);
            release(b);
            const int r = new_reg();
            code_.push_back({op, r, acc, b, 0});
            acc = r;
        }
        return acc;
    }
    case Kind::IntPow: {
        const int base = compile(ch[0], g);
        int acc = base;
        for (int i = 1; i < e->exponent; ++i) {
            if (acc != base) release(acc);
            const int r = new_reg();
            code_.push_back({Op::Mul, r, acc, base, 0});
            acc = r;
        }
        release(base);
        return acc;
    }
    case Kind::Derivative: throw NotDiscretizedError("kernel statement contains a derivative node");
    }
    throw StructuralError("unknown node kind");
}

void Kernel::run(FieldStore& store, const Grid& g, WorkerPool& pool) const
{
    std::vector<double*> ptrs(slots_.size());
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        const Slot& slot = slots_[s];
        Array* a = nullptr;
        switch (slot.kind) {
        case Slot::Kind::Field: a = &store.array(static_cast<Field>(slot.index)); break;
        case Slot::Kind::Work: a = &store.work.at(static_cast<std::size_t>(slot.index)); break;
        case Slot::Kind::Residual: a = &store.residual.at(static_cast<std::size_t>(slot.index)); break;
        }
        if (a->size() != g.padded_size()) throw StructuralError("array not allocated for kernel slot");
        ptrs[s] = a->data();
    }

    const int n = g.n();
    const int batch = std::min(kBatch, n);
    pool.run([&](int worker, int workers) {
        const int k0 = n * worker / workers;
        const int k1 = n * (worker + 1) / workers;
        std::vector<double> regs(static_cast<std::size_t>(std::max(num_regs_, 1)) * kBatch);
        auto reg = [&](int r) { return regs.data() + static_cast<std::size_t>(r) * kBatch; };
        for (std::size_t c = 0; c < constant_regs_.size(); ++c) {
            std::fill_n(reg(constant_regs_[c]), kBatch, constants_[c]);
        }
        for (int k = k0; k < k1; ++k) {
            for (int j = 0; j < n; ++j) {
                for (int i0 = 0; i0 < n; i0 += batch) {
                    const int w = std::min(batch, n - i0);
                    const std::size_t base = g.index(i0, j, k);
                    for (const Instr& in : code_) {
                        double* d = reg(in.dst);
                        switch (in.op) {
                        case Op::Load: {
                            const double* s =
                                ptrs[static_cast<std::size_t>(in.a)] + static_cast<std::int64_t>(base) + in.offset;
                            for (int p = 0; p < w; ++p) d[p] = s[p];
                            break;
                        }
                        case Op::Add: {
                            const double* x = reg(in.a);
                            const double* y = reg(in.b);
                            for (int p = 0; p < w; ++p) d[p] = x[p] + y[p];
                            break;
                        }
                        case Op::Mul: {
                            const double* x = reg(in.a);
                            const double* y = reg(in.b);
                            for (int p = 0; p < w; ++p) d[p] = x[p] * y[p];
                            break;
                        }
                        case Op::Div: {
                            const double* x = reg(in.a);
                            const double* y = reg(in.b);
                            for (int p = 0; p < w; ++p) d[p] = x[p] / y[p];
                            break;
                        }
                        case Op::Neg: {
                            const double* x = reg(in.a);
                            for (int p = 0; p < w; ++p) d[p] = -x[p];
                            break;
                        }
                        case Op::Copy: {
                            const double* x = reg(in.a);
                            for (int p = 0; p < w; ++p) d[p] = x[p];
                            break;
                        }
                        case Op::Store: {
                            double* t = ptrs[static_cast<std::size_t>(in.dst)] + base;
                            const double* x = reg(in.a);
                            for (int p = 0; p < w; ++p) t[p] = x[p];
                            break;
                        }
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------
Executor::Executor(const plan::KernelPlan& plan, const Grid& g, int workers)
    : plan_(plan), grid_(g), pool_(std::make_unique<WorkerPool>(workers))
{
    plan::check_plan(plan_);
    for (std::size_t a = 0; a < 3; ++a) {
        if (plan_.h[a] != g.h()) throw StructuralError("plan spacing does not match the grid");
    }

    std::vector<Kernel::Store> prim_stores;
    for (const auto& o : plan_.primitive_outputs) {
        prim_stores.push_back({Kernel::Store::Target::Field, static_cast<int>(o.field), o.value});
    }
    primitive_ = std::make_unique<Kernel>(plan_.primitive_locals, prim_stores, g);

    for (const auto& w : plan_.work) {
        WorkKernel wk;
        if (w.staged) {
            std::vector<Kernel::Store> s{{Kernel::Store::Target::Field, static_cast<int>(Field::Scratch), *w.staged}};
            wk.staging = std::make_unique<Kernel>(std::span<const plan::LocalAssign>{}, s, g);
        }
        std::vector<Kernel::Store> s{{Kernel::Store::Target::Work, w.array, w.value}};
        wk.value = std::make_unique<Kernel>(std::span<const plan::LocalAssign>{}, s, g);
        work_.push_back(std::move(wk));
    }

    std::vector<Kernel::Store> res;
    for (std::size_t c = 0; c < 5; ++c) {
        res.push_back({Kernel::Store::Target::Residual, static_cast<int>(c), plan_.residuals[c]});
    }
    point_ = std::make_unique<Kernel>(plan_.locals, res, g);
}

void Executor::prepare(FieldStore& store) const
{
    store.work.resize(plan_.work.size());
    for (Array& a : store.work) {
        if (a.size() != grid_.padded_size()) a.assign(grid_.padded_size(), 0.0);
    }
    const bool staged = std::any_of(plan_.work.begin(), plan_.work.end(), [](const auto& w) { return w.staged.has_value(); });
    if (staged && store.scratch.size() != grid_.padded_size()) {
        store.scratch.assign(grid_.padded_size(), 0.0);
    } else if (!staged) {
        store.scratch.clear();
    }
}

void Executor::execute(FieldStore& store, std::int64_t step) const
{
    const Grid& g = grid_;
    const int n = g.n();
    prepare(store);
    auto context = [&](std::size_t idx) {
        std::string s = " at point " + point_text(g, idx);
        if (step >= 0) s += " (step " + std::to_string(step) + ")";
        return s;
    };

    primitive_->run(store, g, *pool_);
    const Array& rho = store.solution[0];
    const Array& temp = store.primitive[4];
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = g.index(i, j, k);
                if (!(rho[idx] > 0.0)) throw StateError("non-positive density " + std::to_string(rho[idx]) + context(idx));
                if (!(temp[idx] > 0.0)) throw StateError("non-positive temperature " + std::to_string(temp[idx]) + context(idx));
            }
        }
    }
    for (Array& a : store.primitive) halo_exchange_periodic(a, g);

    std::vector<bool> exchanged(plan_.work.size(), false);
    auto ensure_exchanged = [&](const Kernel& k) {
        for (int w : k.work_reads_offset()) {
            if (!exchanged[static_cast<std::size_t>(w)]) {
                halo_exchange_periodic(store.work[static_cast<std::size_t>(w)], g);
                exchanged[static_cast<std::size_t>(w)] = true;
            }
        }
    };
    for (std::size_t e = 0; e < work_.size(); ++e) {
        const WorkKernel& wk = work_[e];
        if (wk.staging) {
            wk.staging->run(store, g, *pool_);
            if (wk.value->reads_scratch_offset()) halo_exchange_periodic(store.scratch, g);
        }
        ensure_exchanged(*wk.value);
        wk.value->run(store, g, *pool_);
        exchanged[static_cast<std::size_t>(plan_.work[e].array)] = false;
    }
    ensure_exchanged(*point_);
    point_->run(store, g, *pool_);

    for (std::size_t c = 0; c < 5; ++c) {
        const Array& r = store.residual[c];
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < n; ++j) {
                const std::size_t base = g.index(0, j, k);
                for (int i = 0; i < n; ++i) {
                    if (!std::isfinite(r[base + static_cast<std::size_t>(i)])) {
                        throw NumericalBlowupError("non-finite residual in component " + std::to_string(c) +
                                                   context(base + static_cast<std::size_t>(i)));
                    }
                }
            }
        }
    }
}

void execute_plan(const plan::KernelPlan& plan, FieldStore& store, const Grid& g, int workers)
{
    Executor(plan, g, workers).execute(store);
}

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------
void write_snapshot(const std::filesystem::path& path, const FieldStore& store, const Grid& g, std::int64_t step)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open snapshot file " + path.string());
    const int n = g.n();
    std::vector<char> row(static_cast<std::size_t>(n) * sizeof(double));
    for (const Array& a : store.solution) {
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < n; ++j) {
                const std::size_t base = g.index(0, j, k);
                for (int i = 0; i < n; ++i) {
                    std::uint64_t bits = std::bit_cast<std::uint64_t>(a[base + static_cast<std::size_t>(i)]);
                    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
                    std::memcpy(row.data() + static_cast<std::size_t>(i) * sizeof(double), &bits, sizeof(bits));
                }
                out.write(row.data(), static_cast<std::streamsize>(row.size()));
            }
        }
    }
    if (!out) throw IoError("failed writing snapshot " + path.string());

    std::ofstream hdr(path.string() + ".hdr");
    if (!hdr) throw IoError("cannot open snapshot header " + path.string() + ".hdr");
    hdr << "format=float64-le\n"
        << "layout=axis0-fastest\n"
        << "N=" << n << "\n"
        << "fields=rho,rhou0,rhou1,rhou2,rhoE\n"
        << "step=" << step << "\n";
    if (!hdr) throw IoError("failed writing snapshot header");
}

} // namespace fdlab::grid
