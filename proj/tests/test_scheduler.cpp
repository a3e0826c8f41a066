#include <doctest.h>

#include <atomic>
#include <cmath>
#include <mutex>

#include "shift/errors.hpp"
#include "shift/optimizer.hpp"
#include "shift/scheduler.hpp"

using namespace shift;

TEST_CASE("partitioning splits near-equally above the threshold") {
    auto p = partition_for_balance(80000, 8, 1024);
    REQUIRE(p.size() == 8);
    for (auto [b, e] : p) CHECK(e - b == 10000);
    CHECK(p.front().first == 0);
    CHECK(p.back().second == 80000);

    CHECK(partition_for_balance(500, 8, 1024).size() == 1);
    CHECK(partition_for_balance(500, 8, 1024)[0] == std::pair<uint64_t, uint64_t>{0, 500});

    auto q = partition_for_balance(8001, 8, 1024);
    REQUIRE(q.size() == 8);
    CHECK(q[0].second - q[0].first == 1001);
    for (size_t i = 1; i < 8; ++i) CHECK(q[i].second - q[i].first == 1000);
    uint64_t covered = 0;
    for (auto [b, e] : q) {
        CHECK(b == covered);
        covered = e;
    }
    CHECK(covered == 8001);
}

TEST_CASE("single accelerator runs independent tasks serially in order") {
    TaskPlan plan;
    plan.add(TaskKind::Inference, "a", 5.0);
    plan.add(TaskKind::Inference, "b", 3.0);
    plan.add(TaskKind::Inference, "c", 2.0);
    auto report = run_simulated(plan, {.accelerator_speeds = {1.0}, .cpu_workers = 1});
    CHECK(report.ok());
    CHECK(report.makespan_ms == doctest::Approx(10.0));
    CHECK(report.tasks[0].start_ms == doctest::Approx(0.0));
    CHECK(report.tasks[1].start_ms == doctest::Approx(5.0));
    CHECK(report.tasks[2].start_ms == doctest::Approx(8.0));
    for (const auto& t : report.tasks) CHECK(t.device == "accel0");
    CHECK(report.device_busy_ms.at("accel0") == doctest::Approx(10.0));
    CHECK(report.device_busy_ms.at("cpu0") == doctest::Approx(0.0));
}

TEST_CASE("eight accelerators run eight tasks concurrently") {
    TaskPlan plan;
    for (int i = 0; i < 8; ++i)
        plan.add(TaskKind::Inference, "t" + std::to_string(i), 2.0 + i);
    DeviceConfig devices{.accelerator_speeds = std::vector<double>(8, 1.0), .cpu_workers = 1};
    auto report = run_simulated(plan, devices);
    CHECK(report.makespan_ms == doctest::Approx(9.0)); // max single cost
    for (const auto& t : report.tasks) CHECK(t.start_ms == doctest::Approx(0.0));
}

TEST_CASE("proxy waits for both inference dependencies") {
    TaskPlan plan;
    size_t train = plan.add(TaskKind::Inference, "train", 4.0);
    size_t test = plan.add(TaskKind::Inference, "test", 7.0);
    plan.add(TaskKind::Proxy, "proxy", 1.0, {train, test});
    auto report = run_simulated(plan, {.accelerator_speeds = {1.0, 1.0}, .cpu_workers = 2});
    CHECK(report.tasks[2].start_ms == doctest::Approx(7.0));
    CHECK(report.tasks[2].device.substr(0, 3) == "cpu"); // proxies never on accelerators
    CHECK(report.makespan_ms == doctest::Approx(8.0));
}

TEST_CASE("accelerator speed factor scales durations") {
    TaskPlan plan;
    plan.add(TaskKind::Inference, "t", 10.0);
    auto report = run_simulated(plan, {.accelerator_speeds = {2.0}, .cpu_workers = 1});
    CHECK(report.makespan_ms == doctest::Approx(5.0));
}

TEST_CASE("inference falls back to the cpu pool without accelerators") {
    TaskPlan plan;
    plan.add(TaskKind::Inference, "t", 3.0);
    auto report = run_simulated(plan, {.cpu_workers = 2});
    CHECK(report.tasks[0].device == "cpu0");
}

TEST_CASE("cached tasks finish instantly and need no cost") {
    TaskPlan plan;
    Task hit;
    hit.kind = TaskKind::Proxy;
    hit.label = "hit";
    hit.cached = true; // note: no cost annotation
    size_t h = plan.add(hit);
    plan.add(TaskKind::Proxy, "after", 2.0, {h});
    auto report = run_simulated(plan, {.cpu_workers = 1});
    CHECK(report.ok());
    CHECK(report.tasks[0].finish_ms == doctest::Approx(0.0));
    CHECK(report.makespan_ms == doctest::Approx(2.0));
}

TEST_CASE("missing cost annotations are rejected") {
    TaskPlan plan;
    plan.add(TaskKind::Proxy, "t", -1.0);
    CHECK_THROWS_AS(run_simulated(plan, {.cpu_workers = 1}), Error);
}

TEST_CASE("cycles are rejected") {
    TaskPlan plan;
    Task a, b;
    a.label = "a";
    a.cost_ms = 1;
    a.deps = {1};
    b.label = "b";
    b.cost_ms = 1;
    b.deps = {0};
    plan.add(a);
    plan.add(b);
    CHECK_THROWS_AS(run_simulated(plan, {.cpu_workers = 1}), Error);
    CHECK_THROWS_AS(topological_order(plan), Error);
}

TEST_CASE("no worker idles while work of its class waits") {
    TaskPlan plan;
    plan.add(TaskKind::Proxy, "long", 4.0);
    plan.add(TaskKind::Proxy, "s1", 1.0);
    plan.add(TaskKind::Proxy, "s2", 1.0);
    plan.add(TaskKind::Proxy, "s3", 1.0);
    auto report = run_simulated(plan, {.cpu_workers = 2});
    CHECK(report.makespan_ms == doctest::Approx(4.0));
    CHECK(report.device_busy_ms.at("cpu0") == doctest::Approx(4.0));
    CHECK(report.device_busy_ms.at("cpu1") == doctest::Approx(3.0));
}

namespace {

// Plain (no-halving) plan for one model pool: per model, train inference
// split into `parts` chunks, test inference likewise, one proxy depending on
// them all. Task costs sum exactly to the closed-form plain cost times the
// worker count.
TaskPlan build_plain_plan(const CostModelParams& p, uint64_t parts) {
    TaskPlan plan;
    for (size_t m = 0; m < p.models.size(); ++m) {
        const auto& model = p.models[m];
        std::string id = "m" + std::to_string(m);
        std::vector<size_t> deps;
        auto train_parts = partition_for_balance(p.n_train, parts, 0);
        for (auto [b, e] : train_parts) {
            double cost = (model.load_ms + p.train_load_ms) / double(train_parts.size()) +
                          model.per_sample_ms * double(e - b);
            deps.push_back(plan.add(TaskKind::Inference, id + ":train", cost));
        }
        auto test_parts = partition_for_balance(p.n_test, parts, 0);
        for (auto [b, e] : test_parts) {
            double cost = model.load_ms / double(test_parts.size()) +
                          model.per_sample_ms * double(e - b);
            deps.push_back(plan.add(TaskKind::Inference, id + ":test", cost));
        }
        plan.add(TaskKind::Proxy, id + ":proxy",
                 p.test_load_ms + p.proxy_per_sample_ms * double(p.n_train), deps);
    }
    return plan;
}

double max_task_cost(const TaskPlan& plan) {
    double m = 0;
    for (const auto& t : plan.tasks) m = std::max(m, t.cost_ms);
    return m;
}

} // namespace

TEST_CASE("simulated makespan of plain plans matches the cost formula") {
    for (uint32_t workers : {1u, 8u}) {
        for (size_t m : {1, 2, 4, 8}) {
            CostModelParams p;
            p.parallel_workers = workers;
            p.models.assign(m, ModelCost{10.0, 1.0});
            p.n_train = 8000;
            p.n_test = 4000;
            p.train_load_ms = 5;
            p.test_load_ms = 5;
            p.proxy_per_sample_ms = 0.01;

            auto plan = build_plain_plan(p, workers);
            auto report = run_simulated(plan, {.cpu_workers = workers});
            double formula = cost_without_sh(p);
            if (workers == 1) {
                CHECK(report.makespan_ms == doctest::Approx(formula).epsilon(1e-9));
            } else {
                CHECK(std::abs(report.makespan_ms - formula) <= max_task_cost(plan));
            }
        }
    }
}

TEST_CASE("threaded mode runs real work with dependency order") {
    TaskPlan plan;
    std::atomic<int> stage{0};
    std::atomic<bool> order_ok{true};
    Task a;
    a.kind = TaskKind::Inference;
    a.label = "a";
    a.work = [&] { stage = 1; };
    size_t ia = plan.add(a);
    Task b;
    b.kind = TaskKind::Proxy;
    b.label = "b";
    b.deps = {ia};
    b.work = [&] {
        if (stage.load() != 1) order_ok = false;
        stage = 2;
    };
    plan.add(b);
    auto report = run_threaded(plan, {.accelerator_speeds = {1.0}, .cpu_workers = 2});
    CHECK(report.ok());
    CHECK(order_ok.load());
    CHECK(stage.load() == 2);
    CHECK(report.tasks[0].device == "accel0");
    CHECK(report.tasks[1].device.substr(0, 3) == "cpu");
    CHECK(report.tasks[1].start_ms >= report.tasks[0].finish_ms - 1e-6);
}

TEST_CASE("a failed task takes down its dependents but not independents") {
    TaskPlan plan;
    std::atomic<int> runs{0};
    Task a;
    a.label = "a";
    a.work = [&] { throw std::runtime_error("boom"); };
    size_t ia = plan.add(a);
    Task b;
    b.label = "b";
    b.deps = {ia};
    b.work = [&] { ++runs; };
    size_t ib = plan.add(b);
    Task c;
    c.label = "c";
    c.deps = {ib};
    c.work = [&] { ++runs; };
    plan.add(c);
    Task d;
    d.label = "d";
    d.work = [&] { ++runs; };
    plan.add(d);

    auto report = run_threaded(plan, {.cpu_workers = 2});
    CHECK_FALSE(report.ok());
    CHECK(report.n_failed == 3);
    CHECK(report.n_done == 1);
    CHECK(runs.load() == 1); // only d ran
    CHECK(report.tasks[0].status == TaskStatus::Failed);
    CHECK(report.tasks[0].error == "boom");
    CHECK(report.tasks[1].status == TaskStatus::Failed);
    CHECK(report.tasks[1].error == "dependency failed");
    CHECK(report.tasks[2].status == TaskStatus::Failed);
    CHECK(report.tasks[3].status == TaskStatus::Done);
}

TEST_CASE("threaded cached tasks skip their work") {
    TaskPlan plan;
    std::atomic<int> runs{0};
    Task a;
    a.label = "cached";
    a.cached = true;
    a.work = [&] { ++runs; };
    plan.add(a);
    auto report = run_threaded(plan, {.cpu_workers = 1});
    CHECK(report.ok());
    CHECK(runs.load() == 0);
}

TEST_CASE("device configs are validated") {
    TaskPlan plan;
    plan.add(TaskKind::Proxy, "t", 1.0);
    CHECK_THROWS_AS(run_simulated(plan, {.cpu_workers = 0}), Error);
    CHECK_THROWS_AS(run_simulated(plan, {.accelerator_speeds = {0.0}, .cpu_workers = 1}), Error);
}
