#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace shift {

enum class TaskKind { Inference, Proxy, DataSim };
const char* to_string(TaskKind kind);

// One node of a task DAG. `cost_ms` feeds the simulated clock; `work` is the
// real-mode action (may be empty for pure bookkeeping nodes). A task whose
// inputs were served from cache is marked `cached` and carries no work or
// cost; the scheduler completes it instantly so dependents can proceed.
struct Task {
    TaskKind kind = TaskKind::Inference;
    std::string label;
    double cost_ms = -1.0;
    bool cached = false;
    std::vector<size_t> deps; // indices into TaskPlan::tasks
    std::function<void()> work;
};

struct TaskPlan {
    std::vector<Task> tasks;

    size_t add(Task t) {
        tasks.push_back(std::move(t));
        return tasks.size() - 1;
    }
    size_t add(TaskKind kind, std::string label, double cost_ms,
               std::vector<size_t> deps = {}) {
        Task t;
        t.kind = kind;
        t.label = std::move(label);
        t.cost_ms = cost_ms;
        t.deps = std::move(deps);
        return add(std::move(t));
    }
    size_t size() const { return tasks.size(); }
};

// Device inventory: each accelerator is a single worker with a speed factor
// (2.0 halves task durations on the simulated clock); the CPU pool is one
// logical device with `cpu_workers` unit-speed workers. Inference tasks go to
// accelerators when any exist, proxy and dataset-similarity tasks always go
// to the CPU pool.
struct DeviceConfig {
    std::vector<double> accelerator_speeds;
    uint32_t cpu_workers = 1;
    uint64_t partition_threshold = 1024;

    size_t accelerator_count() const { return accelerator_speeds.size(); }
};

enum class TaskStatus { Pending, Done, Failed };
const char* to_string(TaskStatus status);

struct TaskTiming {
    TaskStatus status = TaskStatus::Pending;
    double start_ms = -1.0;
    double finish_ms = -1.0;
    std::string device;
    std::string error;
};

struct RunReport {
    double makespan_ms = 0.0;
    std::vector<TaskTiming> tasks;
    std::map<std::string, double> device_busy_ms;
    size_t n_done = 0;
    size_t n_failed = 0;

    bool ok() const { return n_failed == 0; }
};

// Near-equal [begin, end) ranges: one partition when n_samples is below the
// threshold, otherwise n_devices partitions whose sizes differ by at most 1.
std::vector<std::pair<uint64_t, uint64_t>>
partition_for_balance(uint64_t n_samples, uint64_t n_devices,
                      uint64_t threshold = 1024);

// Kahn's algorithm; throws CyclicPlan on a cycle, InvalidField on deps that
// point outside the plan.
std::vector<size_t> topological_order(const TaskPlan& plan);

// Discrete-event execution on a virtual clock: FIFO per device class, a task
// becomes ready when all dependencies finished, a freed worker picks the
// lowest-index ready task of its class. Deterministic; every non-cached task
// needs a cost annotation (MissingCost otherwise).
RunReport run_simulated(const TaskPlan& plan, const DeviceConfig& devices);

// Same policy on real threads running each task's `work` closure. A throwing
// task is marked failed along with its entire dependent subtree; independent
// tasks keep running. Timings are wall-clock milliseconds from submission.
RunReport run_threaded(const TaskPlan& plan, const DeviceConfig& devices);

} // namespace shift
