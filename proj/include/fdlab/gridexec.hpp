#pragma once

// Periodic 3D grid storage and the data-parallel plan executor.

#include "fdlab/kernelplan.hpp"

#include <array>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace fdlab::grid {

inline constexpr int kHalo = 4;
inline constexpr int kMinPoints = 8;

// Uniform periodic cube [0, 2*pi)^3 with n points per axis. Arrays are padded
// by kHalo on every side; axis 0 is contiguous.
class Grid {
public:
    explicit Grid(int n);

    int n() const { return n_; }
    double h() const { return h_; }
    std::array<double, 3> spacing() const { return {h_, h_, h_}; }
    int padded() const { return padded_; }
    std::size_t padded_size() const { return static_cast<std::size_t>(padded_) * padded_ * padded_; }
    std::int64_t interior_size() const { return static_cast<std::int64_t>(n_) * n_ * n_; }

    // Linear index of interior point (i, j, k); halo indices are in [-kHalo, n + kHalo).
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i + kHalo) +
               static_cast<std::size_t>(padded_) *
                   (static_cast<std::size_t>(j + kHalo) + static_cast<std::size_t>(padded_) * static_cast<std::size_t>(k + kHalo));
    }
    std::int64_t linear_offset(const expr::Offset& o) const
    {
        return o[0] + static_cast<std::int64_t>(padded_) * (o[1] + static_cast<std::int64_t>(padded_) * o[2]);
    }
    double coord(int i) const { return static_cast<double>(i) * h_; }

private:
    int n_;
    int padded_;
    double h_;
};

using Array = std::vector<double>;

// All grid arrays of one simulation.
struct FieldStore {
    explicit FieldStore(const Grid& g);

    std::array<Array, 5> solution;  // rho, rho u0..2, rho E
    std::array<Array, 5> saved;     // state at the start of the step
    std::array<Array, 5> primitive; // u0, u1, u2, p, T
    std::array<Array, 5> residual;
    std::vector<Array> work;        // sized by the executor per plan
    Array scratch;                  // only allocated for plans with staging

    Array& array(expr::Field f);
    const Array& array(expr::Field f) const;
};

// Fills all six halo slabs (edges and corners included) with the periodic
// image of the interior.
void halo_exchange_periodic(Array& a, const Grid& g);

// Compensated sum over the interior.
double grid_sum(const Array& a, const Grid& g);

struct Diagnostics {
    double total_mass = 0.0;       // sum(rho) h^3
    double mean_kinetic = 0.0;     // <1/2 rho |u|^2>
    double max_divergence = 0.0;   // max |div u| with the first-derivative stencil
};

Diagnostics integral_diagnostics(const FieldStore& store, const Grid& g);

// Static pool of workers; run(fn) calls fn(worker, workers) on every worker
// (worker 0 is the caller) and returns when all are done.
class WorkerPool {
public:
    explicit WorkerPool(int workers);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    int size() const { return static_cast<int>(threads_.size()) + 1; }
    void run(const std::function<void(int, int)>& fn);

private:
    void loop(int worker);

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_start_;
    std::condition_variable cv_done_;
    const std::function<void(int, int)>* job_ = nullptr;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

// Register bytecode for one sweep over the grid (a list of local assignments
// and array stores), evaluated over batches of contiguous axis-0 points.
class Kernel {
public:
    struct Store {
        enum class Target { Field, Work, Residual };
        Target target;
        int index; // Field enum value / work id / residual component
        expr::Expr value;
    };

    Kernel(std::span<const plan::LocalAssign> locals, std::span<const Store> stores, const Grid& g);

    // Reads of work arrays at a nonzero offset (need a halo exchange first).
    const std::vector<int>& work_reads_offset() const { return work_offset_reads_; }
    bool reads_scratch_offset() const { return scratch_offset_read_; }
    std::size_t instruction_count() const { return code_.size(); }

    void run(FieldStore& store, const Grid& g, WorkerPool& pool) const;

private:
    enum class Op : std::uint8_t { Load, Add, Mul, Div, Neg, Copy, Store };
    struct Slot {
        enum class Kind : std::uint8_t { Field, Work, Residual } kind;
        int index;
    };
    struct Instr {
        Op op;
        int dst = 0;    // register (or slot for Store)
        int a = 0;      // register (or slot for Load)
        int b = 0;      // register
        std::int64_t offset = 0;
    };

    int compile(const expr::Expr& e, const Grid& g);
    int new_reg();
    void release(int reg);
    int slot_for(Slot::Kind kind, int index);

    std::vector<Instr> code_;
    std::vector<Slot> slots_;
    std::vector<double> constants_; // register -> value for constant registers
    std::vector<int> constant_regs_;
    std::vector<int> free_regs_;
    std::vector<bool> pinned_;
    std::unordered_map<int, int> local_regs_;
    int num_regs_ = 0;
    std::vector<int> work_offset_reads_;
    bool scratch_offset_read_ = false;
};

// Compiled form of a KernelPlan bound to one grid and worker count.
class Executor {
public:
    Executor(const plan::KernelPlan& plan, const Grid& g, int workers = 1);

    const plan::KernelPlan& plan() const { return plan_; }
    const Grid& grid() const { return grid_; }
    int workers() const { return pool_->size(); }

    // Allocates plan-specific arrays (work arrays, scratch) in store.
    void prepare(FieldStore& store) const;

    // Evaluates the residual fields from the current solution. Solution halos
    // must be current. `step` is only used for error context.
    void execute(FieldStore& store, std::int64_t step = -1) const;

private:
    plan::KernelPlan plan_;
    Grid grid_;
    std::unique_ptr<WorkerPool> pool_;
    std::unique_ptr<Kernel> primitive_;
    struct WorkKernel {
        std::unique_ptr<Kernel> staging;
        std::unique_ptr<Kernel> value;
    };
    std::vector<WorkKernel> work_;
    std::unique_ptr<Kernel> point_;
};

// One-shot convenience wrapper.
void execute_plan(const plan::KernelPlan& plan, FieldStore& store, const Grid& g, int workers = 1);

// Raw little-endian float64 dump of the five conserved interiors (axis 0
// fastest, fields in order rho, rhou0, rhou1, rhou2, rhoE) plus a sidecar
// text header at path + ".hdr".
void write_snapshot(const std::filesystem::path& path, const FieldStore& store, const Grid& g, std::int64_t step);

} // namespace fdlab::grid
