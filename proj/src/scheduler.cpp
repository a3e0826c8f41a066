#include "shift/scheduler.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <queue>
#include <set>
#include <thread>

#include "shift/errors.hpp"
#include "shift/util.hpp"

namespace shift {

const char* to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Inference: return "inference";
        case TaskKind::Proxy: return "proxy";
        case TaskKind::DataSim: return "datasim";
    }
    return "?";
}

const char* to_string(TaskStatus status) {
    switch (status) {
        case TaskStatus::Pending: return "pending";
        case TaskStatus::Done: return "done";
        case TaskStatus::Failed: return "failed";
    }
    return "?";
}

std::vector<std::pair<uint64_t, uint64_t>>
partition_for_balance(uint64_t n_samples, uint64_t n_devices, uint64_t threshold) {
    if (n_devices == 0) fail(ErrorCode::ConfigError, "need at least one device");
    uint64_t parts = 1;
    if (n_samples >= threshold) parts = std::min(n_devices, std::max<uint64_t>(n_samples, 1));
    const uint64_t base = n_samples / parts;
    const uint64_t extra = n_samples % parts; // first `extra` parts get one more
    std::vector<std::pair<uint64_t, uint64_t>> ranges;
    uint64_t begin = 0;
    for (uint64_t i = 0; i < parts; ++i) {
        uint64_t size = base + (i < extra ? 1 : 0);
        ranges.emplace_back(begin, begin + size);
        begin += size;
    }
    return ranges;
}

std::vector<size_t> topological_order(const TaskPlan& plan) {
    const size_t n = plan.tasks.size();
    std::vector<size_t> indegree(n, 0);
    std::vector<std::vector<size_t>> children(n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t d : plan.tasks[i].deps) {
            if (d >= n)
                fail(ErrorCode::InvalidField,
                     "task '" + plan.tasks[i].label + "' depends on index " +
                         std::to_string(d) + " outside the plan");
            children[d].push_back(i);
            ++indegree[i];
        }
    }
    std::vector<size_t> order;
    order.reserve(n);
    std::priority_queue<size_t, std::vector<size_t>, std::greater<>> frontier;
    for (size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) frontier.push(i);
    while (!frontier.empty()) {
        size_t i = frontier.top();
        frontier.pop();
        order.push_back(i);
        for (size_t c : children[i])
            if (--indegree[c] == 0) frontier.push(c);
    }
    if (order.size() != n) fail(ErrorCode::CyclicPlan, "task plan contains a dependency cycle");
    return order;
}

namespace {

struct Worker {
    std::string name;
    double speed = 1.0;
    bool accelerator = false;
    double free_at = 0.0;
};

std::vector<Worker> make_workers(const DeviceConfig& devices) {
    if (devices.cpu_workers == 0)
        fail(ErrorCode::ConfigError, "cpu pool needs at least one worker");
    std::vector<Worker> workers;
    for (size_t i = 0; i < devices.accelerator_speeds.size(); ++i) {
        double speed = devices.accelerator_speeds[i];
        if (!(speed > 0))
            fail(ErrorCode::ConfigError,
                 "accelerator " + std::to_string(i) + " has non-positive speed");
        workers.push_back({"accel" + std::to_string(i), speed, true, 0.0});
    }
    for (uint32_t i = 0; i < devices.cpu_workers; ++i)
        workers.push_back({"cpu" + std::to_string(i), 1.0, false, 0.0});
    return workers;
}

bool wants_accelerator(const Task& task, bool have_accelerators) {
    return task.kind == TaskKind::Inference && have_accelerators;
}

// Mark `root` failed and sweep its dependent subtree; already-terminal tasks
// keep their status.
void fail_subtree(size_t root, const std::string& message,
                  const std::vector<std::vector<size_t>>& children, RunReport& report) {
    std::vector<size_t> stack{root};
    bool first = true;
    while (!stack.empty()) {
        size_t i = stack.back();
        stack.pop_back();
        TaskTiming& t = report.tasks[i];
        if (t.status == TaskStatus::Failed) continue;
        if (t.status == TaskStatus::Done && !first) continue;
        t.status = TaskStatus::Failed;
        if (t.error.empty())
            t.error = first ? message : "dependency failed";
        ++report.n_failed;
        for (size_t c : children[i]) stack.push_back(c);
        first = false;
    }
}

} // namespace

RunReport run_simulated(const TaskPlan& plan, const DeviceConfig& devices) {
    topological_order(plan); // validates deps + acyclicity
    auto workers = make_workers(devices);
    const bool have_accel = devices.accelerator_count() > 0;
    const size_t n = plan.tasks.size();

    for (const Task& t : plan.tasks)
        if (!t.cached && t.cost_ms < 0)
            fail(ErrorCode::MissingCost, "task '" + t.label + "' has no cost annotation");

    RunReport report;
    report.tasks.resize(n);
    for (const auto& w : workers) report.device_busy_ms[w.name] = 0.0;

    std::vector<size_t> remaining(n, 0);
    std::vector<std::vector<size_t>> children(n);
    for (size_t i = 0; i < n; ++i) {
        remaining[i] = plan.tasks[i].deps.size();
        for (size_t d : plan.tasks[i].deps) children[d].push_back(i);
    }

    // FIFO queue per device class ordered by (time the task became ready,
    // submission index).
    std::set<std::pair<double, size_t>> accel_queue, cpu_queue;
    auto enqueue = [&](size_t i, double when) {
        if (wants_accelerator(plan.tasks[i], have_accel))
            accel_queue.emplace(when, i);
        else
            cpu_queue.emplace(when, i);
    };
    for (size_t i = 0; i < n; ++i)
        if (remaining[i] == 0) enqueue(i, 0.0);

    // Completion events ordered by (finish time, task index).
    std::priority_queue<std::pair<double, size_t>, std::vector<std::pair<double, size_t>>,
                        std::greater<>>
        completions;

    double now = 0.0;
    size_t terminal = 0;
    while (terminal < n) {
        bool assigned = true;
        while (assigned) {
            assigned = false;
            for (auto* queue : {&accel_queue, &cpu_queue}) {
                auto it = queue->begin();
                if (it == queue->end() || it->first > now) continue;
                // Next free device of this class: earliest free_at, then name order.
                Worker* pick = nullptr;
                for (auto& w : workers) {
                    if (w.accelerator != (queue == &accel_queue)) continue;
                    if (w.free_at > now) continue;
                    if (!pick || w.free_at < pick->free_at) pick = &w;
                }
                if (!pick) continue;
                size_t i = it->second;
                queue->erase(it);
                const Task& task = plan.tasks[i];
                double duration = task.cached ? 0.0 : task.cost_ms / pick->speed;
                TaskTiming& timing = report.tasks[i];
                timing.start_ms = now;
                timing.finish_ms = now + duration;
                timing.device = pick->name;
                pick->free_at = now + duration;
                report.device_busy_ms[pick->name] += duration;
                completions.emplace(now + duration, i);
                assigned = true;
            }
        }
        if (completions.empty()) break; // nothing running and nothing assignable
        now = completions.top().first;
        while (!completions.empty() && completions.top().first <= now) {
            size_t i = completions.top().second;
            completions.pop();
            report.tasks[i].status = TaskStatus::Done;
            ++report.n_done;
            ++terminal;
            report.makespan_ms = std::max(report.makespan_ms, report.tasks[i].finish_ms);
            for (size_t c : children[i])
                if (--remaining[c] == 0) enqueue(c, now);
        }
    }
    return report;
}

RunReport run_threaded(const TaskPlan& plan, const DeviceConfig& devices) {
    topological_order(plan);
    auto workers = make_workers(devices);
    const bool have_accel = devices.accelerator_count() > 0;
    const size_t n = plan.tasks.size();

    RunReport report;
    report.tasks.resize(n);
    for (const auto& w : workers) report.device_busy_ms[w.name] = 0.0;

    std::vector<size_t> remaining(n, 0);
    std::vector<std::vector<size_t>> children(n);
    for (size_t i = 0; i < n; ++i) {
        remaining[i] = plan.tasks[i].deps.size();
        for (size_t d : plan.tasks[i].deps) children[d].push_back(i);
    }

    std::mutex mu;
    std::condition_variable cv;
    std::set<size_t> accel_ready, cpu_ready; // FIFO by submission index
    size_t terminal = 0;

    auto enqueue_locked = [&](size_t i) {
        if (wants_accelerator(plan.tasks[i], have_accel))
            accel_ready.insert(i);
        else
            cpu_ready.insert(i);
    };
    for (size_t i = 0; i < n; ++i)
        if (remaining[i] == 0) enqueue_locked(i);

    // Terminal bookkeeping under the lock: either release dependents or fail
    // the subtree rooted here.
    auto settle_locked = [&](size_t i, bool failed, const std::string& message) {
        if (failed) {
            size_t before = report.n_failed;
            fail_subtree(i, message, children, report);
            terminal += report.n_failed - before;
        } else {
            report.tasks[i].status = TaskStatus::Done;
            ++report.n_done;
            ++terminal;
            for (size_t c : children[i]) {
                if (--remaining[c] == 0 && report.tasks[c].status == TaskStatus::Pending)
                    enqueue_locked(c);
            }
        }
    };

    const double t0 = now_ms();
    auto worker_loop = [&](size_t worker_index) {
        Worker& me = workers[worker_index];
        std::set<size_t>& my_queue = me.accelerator ? accel_ready : cpu_ready;
        std::unique_lock lock(mu);
        while (true) {
            cv.wait(lock, [&] { return !my_queue.empty() || terminal == n; });
            if (my_queue.empty()) return; // all terminal
            size_t i = *my_queue.begin();
            my_queue.erase(my_queue.begin());
            if (report.tasks[i].status != TaskStatus::Pending) continue; // failed meanwhile
            TaskTiming& timing = report.tasks[i];
            timing.device = me.name;
            timing.start_ms = now_ms() - t0;
            lock.unlock();
            std::string error;
            bool failed = false;
            try {
                if (plan.tasks[i].work && !plan.tasks[i].cached) plan.tasks[i].work();
            } catch (const std::exception& e) {
                failed = true;
                error = e.what();
            } catch (...) {
                failed = true;
                error = "unknown error";
            }
            lock.lock();
            timing.finish_ms = now_ms() - t0;
            report.device_busy_ms[me.name] += timing.finish_ms - timing.start_ms;
            report.makespan_ms = std::max(report.makespan_ms, timing.finish_ms);
            settle_locked(i, failed, error);
            cv.notify_all();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(workers.size());
    for (size_t w = 0; w < workers.size(); ++w) threads.emplace_back(worker_loop, w);
    for (auto& t : threads) t.join();
    return report;
}

} // namespace shift
