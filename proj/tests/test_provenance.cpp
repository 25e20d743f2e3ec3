#include <doctest.h>

#include <random>

#include "abase/gateway.hpp"
#include "support/expect.hpp"
#include "support/world.hpp"

using namespace abase;
using testsupport::error_kind;
using testsupport::World;

namespace {

// Independent model of the per-attempt lifecycle:
//   scheduled(1) | rescheduled(n>1, after n-1 failed) -> started -> status* -> failed | completed
// started also waits for every dependency to have a completed attempt.
class LifecycleModel {
 public:
  explicit LifecycleModel(const std::vector<PipelineStep>& steps) {
    for (const auto& s : steps) deps_[s.step_id] = s.depends_on;
  }

  bool legal(const ExecutionEvent& e) const {
    if (!deps_.contains(e.step_id)) return false;
    if (e.attempt < 1 || e.attempt > 3 || e.resource_id.empty()) return false;
    auto st = steps_.find(e.step_id);
    const Step empty;
    const Step& s = st == steps_.end() ? empty : st->second;
    if (s.last && e.timestamp.ms < *s.last) return false;
    auto at = s.attempts.find(e.attempt);
    const Attempt* a = at == s.attempts.end() ? nullptr : &at->second;
    switch (e.kind) {
      case EventKind::scheduled:
        return e.attempt == 1 && s.attempts.empty();
      case EventKind::rescheduled: {
        if (e.attempt < 2 || a) return false;
        auto prev = s.attempts.find(e.attempt - 1);
        return prev != s.attempts.end() && prev->second.phase == Phase::failed;
      }
      case EventKind::started:
        if (!a || a->phase != Phase::waiting || a->resource != e.resource_id) return false;
        for (const auto& d : deps_.at(e.step_id)) {
          auto ds = steps_.find(d);
          if (ds == steps_.end() || !ds->second.done) return false;
        }
        return true;
      default:
        return a && a->phase == Phase::running && a->resource == e.resource_id;
    }
  }

  void apply(const ExecutionEvent& e) {
    auto& s = steps_[e.step_id];
    s.last = e.timestamp.ms;
    auto& a = s.attempts[e.attempt];
    switch (e.kind) {
      case EventKind::scheduled:
      case EventKind::rescheduled:
        a.phase = Phase::waiting;
        a.resource = e.resource_id;
        break;
      case EventKind::started: a.phase = Phase::running; break;
      case EventKind::status: break;
      case EventKind::failed: a.phase = Phase::failed; break;
      case EventKind::completed:
        a.phase = Phase::completed;
        s.done = true;
        break;
    }
  }

 private:
  enum class Phase { waiting, running, failed, completed };
  struct Attempt {
    Phase phase = Phase::waiting;
    std::string resource;
  };
  struct Step {
    std::map<int, Attempt> attempts;
    std::optional<std::int64_t> last;
    bool done = false;
  };
  std::map<std::string, std::set<std::string>> deps_;
  std::map<std::string, Step> steps_;
};

struct Opened {
  Id user;
  Id pipeline;
  AnalysisRecord analysis;
  std::vector<PipelineStep> steps;
};

Opened open_random(World& w, std::mt19937_64& rng, std::size_t n) {
  Opened o;
  o.user = w.user("u");
  auto alg = w.toys(o.user).at("concatenate");
  o.steps = testsupport::random_dag(rng, n, 0.4);
  for (auto& s : o.steps) s.algorithm_id = alg;
  auto [p, v] = w.persistency().register_pipeline(o.user, "rand", "lfn://p/rand", "", o.steps);
  o.pipeline = p.pipeline_id;
  AnalysisRecord req;
  req.user = o.user;
  req.pipeline_id = p.pipeline_id;
  req.version = 1;
  o.analysis = w.persistency().store_analysis(req);
  w.provenance().open_trace(o.analysis);
  return o;
}

ExecutionEvent random_event(std::mt19937_64& rng, const std::vector<PipelineStep>& steps, std::int64_t& clock) {
  static const EventKind kinds[] = {EventKind::scheduled, EventKind::rescheduled, EventKind::started,
                                    EventKind::status,    EventKind::failed,      EventKind::completed};
  ExecutionEvent e;
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  e.step_id = pick(20) == 0 ? "zz" : steps[pick(steps.size())].step_id;
  e.kind = kinds[pick(6)];
  e.attempt = static_cast<int>(pick(20) == 0 ? 4 : 1 + pick(3));
  e.resource_id = pick(30) == 0 ? "" : (pick(2) ? "r1" : "r2");
  clock += static_cast<std::int64_t>(pick(10));
  e.timestamp = Timestamp{pick(25) == 0 ? clock - 50 : clock};
  return e;
}

}  // namespace

TEST_CASE("record_event accepts exactly the events the lifecycle model allows") {
  std::mt19937_64 rng(404);
  std::size_t accepted = 0, rejected = 0, completed_steps = 0;
  for (int trial = 0; trial < 12; ++trial) {
    World w(100 + trial);
    auto o = open_random(w, rng, 2 + trial % 5);
    LifecycleModel model(o.steps);
    std::int64_t clock = 1000;
    std::vector<ExecutionEvent> legal_candidates;
    for (int i = 0; i < 250; ++i) {
      // bias toward legal moves so traces get deep
      ExecutionEvent e;
      for (int tries = 0; tries < 30; ++tries) {
        e = random_event(rng, o.steps, clock);
        if (model.legal(e) || std::bernoulli_distribution(0.15)(rng)) break;
      }
      bool expect = model.legal(e);
      CAPTURE(to_string(e.kind));
      CAPTURE(e.step_id);
      CAPTURE(e.attempt);
      auto kind = error_kind([&] { w.provenance().record_event(o.analysis.analysis_id, e); });
      CHECK(kind.has_value() == !expect);
      if (expect) {
        model.apply(e);
        ++accepted;
        completed_steps += e.kind == EventKind::completed;
      } else {
        ++rejected;
        if (kind) CHECK((*kind == ErrorKind::state || *kind == ErrorKind::validation));
      }
    }
    auto t = w.provenance().trace(o.analysis.analysis_id);
    for (std::size_t k = 0; k < t.events.size(); ++k) CHECK(t.events[k].seq == k + 1);
  }
  CHECK(accepted > 150);
  CHECK(rejected > 200);
  CHECK(completed_steps > 10);
}

TEST_CASE("closing a trace") {
  World w;
  std::mt19937_64 rng(1);
  auto o = open_random(w, rng, 1);
  auto id = o.analysis.analysis_id;
  const auto step = o.steps[0].step_id;
  auto ev = [&](EventKind k, int attempt, std::int64_t at) {
    return w.provenance().record_event(id, {0, step, attempt, k, "r1", Timestamp{at}, {}});
  };
  CHECK(error_kind([&] { w.provenance().close_trace(id, {}, {}, AnalysisStatus::failed); }) == ErrorKind::state);
  ev(EventKind::scheduled, 1, 10);
  ev(EventKind::started, 1, 11);
  CHECK(error_kind([&] { w.provenance().close_trace(id, {}, {}, AnalysisStatus::completed); }) == ErrorKind::state);
  CHECK(error_kind([&] { w.provenance().close_trace(id, {}, {}, AnalysisStatus::running); }) ==
        ErrorKind::validation);
  ev(EventKind::completed, 1, 20);
  FileRef f;
  f.filename = "out";
  CHECK(error_kind([&] { w.provenance().close_trace(id, {{step, "out", 2, f, Timestamp{20}}}, {}, AnalysisStatus::completed); }) ==
        ErrorKind::validation);
  // analysis is still submitted: closing needs running first
  CHECK(error_kind([&] { w.provenance().close_trace(id, {}, {}, AnalysisStatus::completed); }) == ErrorKind::state);
  w.persistency().update_analysis_status(id, AnalysisStatus::running);
  w.provenance().close_trace(id, {{step, "out", 1, f, Timestamp{20}}}, {}, AnalysisStatus::completed);
  CHECK(error_kind([&] { ev(EventKind::status, 1, 30); }) == ErrorKind::state);
  CHECK(error_kind([&] { w.provenance().close_trace(id, {}, {}, AnalysisStatus::completed); }) == ErrorKind::state);
  CHECK(error_kind([&] { w.provenance().open_trace(w.persistency().analysis(id)); }) == ErrorKind::conflict);
  auto t = w.provenance().trace(id);
  CHECK(t.closed);
  CHECK(t.final_status == AnalysisStatus::completed);
  CHECK(w.persistency().analysis(id).status == AnalysisStatus::completed);
  CHECK(w.persistency().audit().empty());
}

TEST_CASE("the snapshot is isolated from later pipeline versions") {
  World w;
  auto u = w.user("u");
  w.toys(u);
  auto pid = w.pipeline(u, "pipeline p\nstep A uses line-count in x:scalar out res\n", "p");
  auto r = w.base().run_analysis(u.str(), {{"pipeline", pid.str() + "@1"}, {"inputs", {"A.x=text:hello"}}});
  auto aid = Id(r.at("analysis").at("analysis_id").get<std::string>());
  auto before = w.provenance().trace(aid);
  w.base().update_pipeline(u.str(), pid.str(),
                           {{"definition", "pipeline p\nstep A uses concatenate in x:scalar out res,more\n"},
                            {"lfn", "lfn://p/p2"}});
  auto alg = w.persistency().algorithm(before.snapshot.algorithms.at(0).algorithm_id);
  CHECK(w.provenance().trace(aid).snapshot == before.snapshot);
  w.reopen();
  auto after = w.provenance().trace(aid);
  CHECK(after == before);
  CHECK(after.snapshot.version.version == 1);
  CHECK(after.snapshot.algorithms.at(0) == alg);
  CHECK(w.provenance().reconstruct(aid).pipeline.steps.at(0).output_ports == std::vector<std::string>{"res"});
}

TEST_CASE("derive_rerun keeps the version and applies overrides per port") {
  World w;
  auto u = w.user("u");
  w.toys(u);
  auto pid = w.pipeline(u,
                        "pipeline p\n"
                        "step A uses concatenate in x:scalar,y:scalar out res\n"
                        "step B uses line-count after A in z:file=A.res out res\n",
                        "p");
  w.base().update_pipeline(u.str(), pid.str(),
                           {{"definition", "pipeline p\nstep A uses concatenate in x:scalar out res\n"},
                            {"lfn", "lfn://p/v2"}});
  auto r = w.base().run_analysis(
      u.str(), {{"pipeline", pid.str() + "@1"}, {"inputs", {"A.x=text:one", "A.x=text:two", "A.y=text:three"}}});
  auto aid = Id(r.at("analysis").at("analysis_id").get<std::string>());
  auto same = w.provenance().derive_rerun(aid, {});
  CHECK(same.version == 1);
  CHECK(same.pipeline_id == pid);
  CHECK(same.user == u);
  CHECK(same.inputs == w.persistency().analysis(aid).input_values);

  auto changed = w.provenance().derive_rerun(aid, {{"A", "y", AttrValue{std::string("four")}}});
  REQUIRE(changed.inputs.size() == 3);
  CHECK(changed.inputs[0] == same.inputs[0]);
  CHECK(changed.inputs[1] == same.inputs[1]);
  CHECK(std::get<std::string>(std::get<AttrValue>(changed.inputs[2].value)) == "four");

  auto collapsed = w.provenance().derive_rerun(aid, {{"A", "x", AttrValue{std::string("solo")}}});
  REQUIRE(collapsed.inputs.size() == 2);
  CHECK(collapsed.inputs[0].port == "x");
  CHECK(collapsed.inputs[1].port == "y");

  CHECK(error_kind([&] { w.provenance().derive_rerun(aid, {{"B", "z", AttrValue{std::int64_t{1}}}}); }) ==
        ErrorKind::validation);
  CHECK(error_kind([&] { w.provenance().derive_rerun(Id(std::string(32, '4')), {}); }) == ErrorKind::not_found);
}

TEST_CASE("reconstruct tells the whole story of a run with a retry") {
  World w;
  auto u = w.user("runner");
  auto author = w.user("author");
  w.toys(author);
  auto pid = w.pipeline(author,
                        "pipeline chain\n"
                        "step A uses concatenate in x:file out res\n"
                        "step B uses line-count after A in y:file=A.res out res\n",
                        "chain");
  RunOptions opts;
  opts.explicit_resources = {{"r1", 1.0, {}}, {"r2", 2.0, {{"B", 1}}}};
  testsupport::write_file(w.root() / "in.txt", "a\nb\n");
  FileRef in;
  in.lfn = "lfn://external/in.txt";
  in.filename = "in.txt";
  in.location = "file://" + (w.root() / "in.txt").string();
  auto a = w.pipelines().submit_analysis(u, pid, 1, {{"A", "x", in}}, opts);
  REQUIRE(a.status == AnalysisStatus::completed);
  w.base().annotate(u.str(), {{"target_kind", "analysis"}, {"target", a.analysis_id.str()}, {"text", "checked"}});
  auto g = w.provenance().reconstruct(a.analysis_id);
  CHECK(g.executor.name == "runner");
  CHECK(g.author.name == "author");
  CHECK(g.closed);
  CHECK(g.status == AnalysisStatus::completed);
  REQUIRE(g.steps.size() == 2);
  CHECK(g.steps[0].algorithm == "concatenate");
  CHECK(g.steps[0].supplied_inputs.size() == 1);
  REQUIRE(g.steps[1].attempts.size() == 2);
  CHECK(g.steps[1].attempts[0].outcome == "failed");
  CHECK(g.steps[1].attempts[0].resource_id == "r2");
  CHECK(g.steps[1].attempts[1].outcome == "completed");
  CHECK(g.steps[1].attempts[1].resource_id == "r1");
  CHECK(g.steps[1].upstream_inputs.at(0).second == PortRef{"A", "res"});
  CHECK(g.errors.size() == 1);
  CHECK(g.annotations.size() == 1);
  CHECK(g.execution_started <= g.execution_finished);
  CHECK(g.outputs.size() == 2);
  for (const auto& o : g.outputs) {
    auto attempt = o.step_id == "B" ? 2 : 1;
    CHECK(o.attempt == attempt);
  }
  auto text = render_text(g);
  CHECK(text.find("injected failure on r2") != std::string::npos);
  CHECK(to_json(g).at("steps").size() == 2);
  CHECK(w.persistency().audit().empty());
}
