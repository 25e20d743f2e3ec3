#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "abase/harness.hpp"
#include "oracles/oracles.hpp"
#include "support/expect.hpp"
#include "support/world.hpp"

using namespace abase;
using testsupport::error_kind;
using testsupport::TempDir;
using testsupport::World;

namespace {

const std::set<std::string> kAlgs = {"line-count", "concatenate", "checksum-stamp", "threshold-filter"};

const char* kDiamond = R"(# four steps
pipeline diamond demo
step A uses concatenate in x:file out res
step B uses line-count after A in y:file=A.res out res   # counts
step C uses checksum-stamp after A in y:file=A.res out res,copy

step D uses concatenate after B,C in p:file=B.res,q:file=C.copy out res
)";

PipelineDefinition parse_ok(std::string_view text) {
  auto r = parse_pipeline(text, kAlgs);
  if (auto* v = std::get_if<std::vector<ParseViolation>>(&r)) {
    FAIL("unexpected violation line " << v->front().line << ": " << v->front().message);
  }
  return std::get<PipelineDefinition>(r);
}

std::vector<ParseViolation> parse_bad(std::string_view text) {
  auto r = parse_pipeline(text, kAlgs);
  REQUIRE(std::holds_alternative<std::vector<ParseViolation>>(r));
  return std::get<std::vector<ParseViolation>>(r);
}

PipelineDefinition definition_of(const std::vector<PipelineStep>& steps, std::mt19937_64& rng) {
  PipelineDefinition def;
  def.name = "random";
  std::vector<std::string> algs(kAlgs.begin(), kAlgs.end());
  for (const auto& s : steps) {
    StepDef d;
    d.step_id = s.step_id;
    d.algorithm = algs[rng() % algs.size()];
    d.depends_on = s.depends_on;
    for (const auto& dep : s.depends_on) {
      if (rng() % 2) d.inputs.push_back({"from_" + dep, PortKind::file, PortRef{dep, "res"}});
    }
    if (rng() % 3 == 0) d.inputs.push_back({"k", PortKind::scalar, std::nullopt});
    d.outputs = {"res"};
    def.steps.push_back(std::move(d));
  }
  return def;
}

std::string mutate(std::string text, std::mt19937_64& rng) {
  static const char* tokens[] = {"step", "uses", "after", "in", "out", "pipeline", ":", "=", ",", ".", "#",
                                 "A",    "Z",    "x:file", "y:bogus", "A.res", "line-count", "nope", "\n"};
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  int edits = 1 + static_cast<int>(pick(3));
  for (int i = 0; i < edits; ++i) {
    auto at = pick(text.size() + 1);
    switch (pick(4)) {
      case 0:
        text.erase(at, 1 + pick(8));
        break;
      case 1:
        text.insert(at, std::string(" ") + tokens[pick(std::size(tokens))] + " ");
        break;
      case 2: {
        auto nl = text.find('\n', at);
        auto start = text.rfind('\n', at == 0 ? 0 : at - 1);
        start = start == std::string::npos ? 0 : start + 1;
        if (nl != std::string::npos && nl > start) text.insert(nl + 1, text.substr(start, nl - start + 1));
        break;
      }
      default:
        if (at < text.size()) text[at] = "AZ:.,= #\n"[pick(9)];
    }
  }
  return text;
}

std::vector<std::string> lexicographic_topo_by_enumeration(const PipelineDefinition& def) {
  std::vector<std::string> ids;
  std::vector<std::pair<std::string, std::set<std::string>>> deps;
  for (const auto& s : def.steps) {
    ids.push_back(s.step_id);
    deps.emplace_back(s.step_id, s.depends_on);
  }
  std::sort(ids.begin(), ids.end());
  do {
    if (oracle::is_topological(ids, deps)) return ids;
  } while (std::next_permutation(ids.begin(), ids.end()));
  return {};
}

struct Bench {
  TempDir dir{"harness"};
  Id aid{std::string(32, 'a')};

  FileRef file(const std::string& name, const std::string& content) {
    testsupport::write_file(dir / name, content);
    FileRef f;
    f.lfn = "lfn://t/" + name;
    f.filename = name;
    f.location = "file://" + (dir / name).string();
    return f;
  }

  ExecutionResult run(const PipelineDefinition& def, const std::vector<InputValue>& inputs,
                      const std::vector<SimResource>& resources, const std::string& tag = "w") {
    ExecutionContext ctx;
    ctx.work_dir = dir / tag;
    ctx.analysis_id = aid;
    ctx.origin = Timestamp{1000};
    return execute(make_plan(def, resources), def, inputs, resources, nullptr, ctx);
  }
};

std::string content_of(const OutputValue& o) { return load_local(std::get<FileRef>(o.value)); }

const OutputValue* output_of(const ExecutionResult& r, const std::string& step, const std::string& port = "res") {
  for (const auto& o : r.outputs) {
    if (o.step_id == step && o.port == port) return &o;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("parse a definition with comments and blank lines") {
  auto def = parse_ok(kDiamond);
  CHECK(def.name == "diamond demo");
  REQUIRE(def.steps.size() == 4);
  CHECK(def.steps[1].line == 4);
  CHECK(def.steps[3].depends_on == std::set<std::string>{"B", "C"});
  CHECK(def.steps[2].outputs == std::vector<std::string>{"res", "copy"});
  CHECK(def.steps[3].inputs[1].source == PortRef{"C", "copy"});
  CHECK(def.step("C")->algorithm == "checksum-stamp");
  CHECK(def.step("nope") == nullptr);
}

TEST_CASE("rejections name their line") {
  struct Case {
    const char* text;
    int line;
    const char* needle;
  };
  const Case cases[] = {
      {"step A uses concatenate out res\n", 1, "before pipeline header"},
      {"pipeline p\nstep A uses magic out res\n", 2, "unregistered algorithm 'magic'"},
      {"pipeline p\nstep A uses concatenate in x out res\n", 2, "needs a kind"},
      {"pipeline p\nstep A uses concatenate\n", 2, "no outputs"},
      {"pipeline p\n\n\nstep A uses concatenate out a,a\n", 4, "duplicate output port"},
      {"pipeline p\nstep A uses concatenate in x:scalar=B.res out r\nstep B uses concatenate out res\n", 2,
       "must have kind file"},
      {"pipeline p\nstep A uses concatenate after B out r\nstep B uses concatenate after A out r\n", 2, "cycle"},
      {"pipeline p\nstep A uses concatenate after Q out r\n", 2, "unresolved"},
      {"pipeline p\nstep B uses concatenate after A out r\nstep A uses concatenate out r\n", 2, "order"},
      {"pipeline p\nstep A uses concatenate out r\nstep A uses concatenate out r\n", 3, "duplicate"},
      {"pipeline p\nfrobnicate\n", 2, "unknown directive"},
      {"pipeline p\npipeline q\nstep A uses concatenate out r\n", 2, "duplicate pipeline header"},
      {"pipeline p\n# nothing\n", 1, "no steps"},
  };
  for (const auto& c : cases) {
    CAPTURE(std::string(c.text));
    auto v = parse_bad(c.text);
    bool found = false;
    for (const auto& x : v) found |= x.line == c.line && x.message.find(c.needle) != std::string::npos;
    CHECK(found);
  }
  CHECK(parse_bad("").at(0).message == "missing pipeline header");
}

TEST_CASE("format then parse is the identity on random DAGs") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 60; ++i) {
    auto steps = testsupport::random_dag(rng, 1 + rng() % 12, 0.3);
    auto def = definition_of(steps, rng);
    auto text = format_pipeline(def);
    auto back = parse_ok(text);
    for (auto& s : back.steps) s.line = 0;
    CHECK(back == def);
    CHECK(format_pipeline(back) == text);
  }
}

TEST_CASE("500 mutated definitions either parse consistently or point at a line") {
  std::mt19937_64 rng(500);
  int parsed = 0, rejected = 0;
  for (int i = 0; i < 500; ++i) {
    auto text = mutate(kDiamond, rng);
    CAPTURE(text);
    auto lines = static_cast<int>(std::count(text.begin(), text.end(), '\n')) + 1;
    auto r = parse_pipeline(text, kAlgs);
    if (auto* def = std::get_if<PipelineDefinition>(&r)) {
      ++parsed;
      auto again = parse_pipeline(format_pipeline(*def), kAlgs);
      REQUIRE(std::holds_alternative<PipelineDefinition>(again));
      CHECK(format_pipeline(std::get<PipelineDefinition>(again)) == format_pipeline(*def));
      std::vector<PipelineStep> steps;
      std::map<std::string, Id> ids;
      for (const auto& a : kAlgs) ids[a] = Id();
      CHECK(validate_steps(to_steps(*def, ids)).empty());
    } else {
      ++rejected;
      const auto& v = std::get<std::vector<ParseViolation>>(r);
      REQUIRE_FALSE(v.empty());
      bool named = false;
      for (const auto& x : v) {
        CHECK(x.line >= 0);
        CHECK(x.line <= lines);
        CHECK_FALSE(x.message.empty());
        named |= x.line >= 1;
      }
      CHECK(named);
    }
  }
  CHECK(parsed > 20);
  CHECK(rejected > 200);
}

TEST_CASE("make_plan picks the smallest topological order, round-robin over resources") {
  auto def = parse_ok(kDiamond);
  std::vector<SimResource> rs = {{"r10", 1, {}}, {"r2", 1, {}}, {"r1", 1, {}}};
  auto plan = make_plan(def, rs);
  using A = std::vector<std::pair<std::string, std::string>>;
  CHECK(plan.assignments == A{{"A", "r1"}, {"B", "r2"}, {"C", "r10"}, {"D", "r1"}});
  CHECK(error_kind([&] { make_plan(def, {}); }) == ErrorKind::validation);

  std::mt19937_64 rng(50);
  for (int i = 0; i < 50; ++i) {
    auto steps = testsupport::random_dag(rng, 1 + rng() % 7, 0.35);
    // shuffle ids so the lexicographic order is not the index order
    std::vector<std::string> names;
    for (std::size_t k = 0; k < steps.size(); ++k) names.push_back(std::string(1, static_cast<char>('a' + k)));
    std::shuffle(names.begin(), names.end(), rng);
    std::map<std::string, std::string> rename;
    for (std::size_t k = 0; k < steps.size(); ++k) rename[steps[k].step_id] = names[k];
    for (auto& s : steps) {
      std::set<std::string> deps;
      for (const auto& d : s.depends_on) deps.insert(rename[d]);
      s.depends_on = deps;
      s.step_id = rename[s.step_id];
    }
    auto d = definition_of(steps, rng);
    auto p = make_plan(d, make_resources(3, i, {}, 0));
    std::vector<std::string> order;
    for (const auto& [id, r] : p.assignments) order.push_back(id);
    CHECK(order == lexicographic_topo_by_enumeration(d));
  }
}

TEST_CASE("make_resources is seeded and honours the failure rate") {
  std::vector<std::string> ids;
  for (int i = 0; i < 200; ++i) ids.push_back("s" + std::to_string(i));
  CHECK(make_resources(3, 9, ids, 0.3) == make_resources(3, 9, ids, 0.3));
  CHECK(make_resources(3, 9, ids, 0.3) != make_resources(3, 10, ids, 0.3));
  for (const auto& r : make_resources(4, 1, ids, 0)) CHECK(r.failure_plan.empty());
  std::size_t fails = 0;
  auto rs = make_resources(4, 1, ids, 0.25);
  for (const auto& r : rs) fails += r.failure_plan.size();
  double rate = static_cast<double>(fails) / (4.0 * 200 * kMaxAttempts);
  CHECK(rate == doctest::Approx(0.25).epsilon(0.2));
  CHECK(rs[0].resource_id == "r1");
  CHECK(attempt_duration_ms(0, 1.0) == 100);
  CHECK(attempt_duration_ms(2048, 2.0) == 51);
}

TEST_CASE("toy algorithms") {
  const auto& toys = toy_algorithms();
  AlgorithmCall call;
  call.files = {{"x", "a.txt", "1\n2\n3"}, {"x", "b.txt", "40 kg\nnot a number\n-5\n"}};
  CHECK(toys.at("line-count")(call) == "6\n");
  CHECK(toys.at("concatenate")(call) == "1\n2\n340 kg\nnot a number\n-5\n");
  CHECK(toys.at("checksum-stamp")(call) == testsupport::sha256_hex("1\n2\n3") + "  a.txt\n" +
                                               testsupport::sha256_hex("40 kg\nnot a number\n-5\n") + "  b.txt\n");
  CHECK_THROWS_AS(toys.at("threshold-filter")(call), Error);
  call.scalars["threshold"] = std::int64_t{2};
  CHECK(toys.at("threshold-filter")(call) == "2\n3\n40 kg\n");
  call.scalars["threshold"] = std::string("high");
  CHECK_THROWS_AS(toys.at("threshold-filter")(call), Error);
}

TEST_CASE("a single line-count step over ten lines yields 10") {
  Bench b;
  auto def = parse_ok("pipeline p\nstep A uses line-count in x:file out res\n");
  std::string ten;
  for (int i = 0; i < 10; ++i) ten += "row " + std::to_string(i) + "\n";
  auto r = b.run(def, {{"A", "x", b.file("in.txt", ten)}}, make_resources(1, 1, {"A"}, 0));
  CHECK(r.status == AnalysisStatus::completed);
  REQUIRE(output_of(r, "A"));
  CHECK(content_of(*output_of(r, "A")) == "10\n");
  CHECK(r.sink_outputs.size() == 1);
  REQUIRE(r.log_refs.size() == 1);
  CHECK(load_local(r.log_refs[0]).find("A #1 completed r1") != std::string::npos);
  std::vector<EventKind> kinds;
  for (const auto& e : r.events) kinds.push_back(e.kind);
  CHECK(kinds == std::vector<EventKind>{EventKind::scheduled, EventKind::started, EventKind::status,
                                        EventKind::completed});
}

TEST_CASE("an injected failure is retried on the next resource with identical results") {
  Bench b;
  auto def = parse_ok(kDiamond);
  auto in = b.file("in.txt", "alpha\nbeta\n");
  std::vector<SimResource> clean = {{"r1", 1, {}}, {"r2", 1, {}}};
  auto failing = clean;
  failing[1].failure_plan = {{"B", 1}};
  auto ok = b.run(def, {{"A", "x", in}}, clean, "clean");
  auto retried = b.run(def, {{"A", "x", in}}, failing, "retried");
  REQUIRE(ok.status == AnalysisStatus::completed);
  REQUIRE(retried.status == AnalysisStatus::completed);
  for (const auto& step : {"A", "B", "C", "D"}) {
    CAPTURE(step);
    CHECK(std::get<FileRef>(output_of(ok, step)->value).checksum ==
          std::get<FileRef>(output_of(retried, step)->value).checksum);
  }
  CHECK(output_of(retried, "B")->attempt == 2);
  std::vector<std::pair<int, std::string>> b_attempts;
  for (const auto& e : retried.events) {
    if (e.step_id == "B" && (e.kind == EventKind::failed || e.kind == EventKind::completed)) {
      b_attempts.emplace_back(e.attempt, e.resource_id);
    }
  }
  CHECK(b_attempts == std::vector<std::pair<int, std::string>>{{1, "r2"}, {2, "r1"}});
}

TEST_CASE("exhausted retries fail the run and skip every descendant") {
  Bench b;
  auto def = parse_ok(kDiamond);
  std::vector<SimResource> rs = {{"r1", 1, {{"B", 1}, {"B", 3}}}, {"r2", 1, {{"B", 2}}}};
  // B starts on r2: attempt 1 on r2 succeeds unless planned; plan all three
  rs[1].failure_plan = {{"B", 1}, {"B", 3}};
  rs[0].failure_plan = {{"B", 2}};
  auto r = b.run(def, {{"A", "x", b.file("in.txt", "x\n")}}, rs);
  CHECK(r.status == AnalysisStatus::failed);
  CHECK(r.error.find("step B") == 0);
  CHECK(r.skipped == std::set<std::string>{"D"});
  CHECK(output_of(r, "C") != nullptr);
  CHECK(output_of(r, "B") == nullptr);
  int b_failures = 0;
  for (const auto& e : r.events) b_failures += e.step_id == "B" && e.kind == EventKind::failed;
  CHECK(b_failures == kMaxAttempts);
  for (const auto& e : r.events) CHECK(e.step_id != "D");
}

TEST_CASE("algorithm errors are not retried") {
  Bench b;
  auto def = parse_ok("pipeline p\nstep A uses threshold-filter in x:file,threshold:scalar out res\n");
  auto r = b.run(def, {{"A", "x", b.file("in.txt", "1\n")}}, make_resources(2, 1, {"A"}, 0));
  CHECK(r.status == AnalysisStatus::failed);
  CHECK(r.error.find("threshold") != std::string::npos);
  int failures = 0;
  for (const auto& e : r.events) failures += e.kind == EventKind::failed;
  CHECK(failures == 1);

  auto missing = b.run(parse_ok("pipeline p\nstep A uses line-count in x:file out res\n"),
                       {{"A", "x", FileRef{"lfn://t/x", "x", "file:///definitely/missing", FileKind::data, 0, {}}}},
                       make_resources(2, 1, {"A"}, 0), "missing");
  CHECK(missing.status == AnalysisStatus::failed);
}

TEST_CASE("execution is deterministic for a seed") {
  Bench b;
  auto def = parse_ok(kDiamond);
  auto in = b.file("in.txt", "1\n2\n");
  std::vector<std::string> ids = {"A", "B", "C", "D"};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto rs = make_resources(3, seed, ids, 0.3);
    auto x = b.run(def, {{"A", "x", in}}, rs, "x");
    auto y = b.run(def, {{"A", "x", in}}, rs, "y");
    CHECK(x.events == y.events);
    CHECK(x.status == y.status);
    CHECK(x.outputs.size() == y.outputs.size());
    for (std::size_t i = 0; i < std::min(x.outputs.size(), y.outputs.size()); ++i) {
      CHECK(std::get<FileRef>(x.outputs[i].value).checksum == std::get<FileRef>(y.outputs[i].value).checksum);
    }
  }
}

TEST_CASE("submitted analyses leave legal traces under random failures") {
  World w;
  auto u = w.user("u");
  w.toys(u);
  auto pid = w.pipeline(u, kDiamond, "diamond");
  testsupport::write_file(w.root() / "in.txt", "a\nb\nc\n");
  FileRef in{"lfn://t/in", "in.txt", "file://" + (w.root() / "in.txt").string(), FileKind::data, 0, {}};
  int failed = 0, completed = 0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    RunOptions o;
    o.seed = seed;
    o.resources = 1 + seed % 3;
    o.failure_rate = 0.4;
    auto a = w.pipelines().submit_analysis(u, pid, 1, {{"A", "x", in}}, o);
    failed += a.status == AnalysisStatus::failed;
    completed += a.status == AnalysisStatus::completed;
    auto t = w.provenance().trace(a.analysis_id);
    CHECK(t.closed);
    CHECK(t.final_status == a.status);
  }
  CHECK(failed > 0);
  CHECK(completed > 0);
  CHECK(w.persistency().audit().empty());
}

TEST_CASE("concurrent submissions are isolated") {
  World w;
  auto u = w.user("u");
  w.toys(u);
  auto pid = w.pipeline(u, kDiamond, "diamond");
  std::vector<FileRef> inputs;
  for (int i = 0; i < 4; ++i) {
    auto name = "in" + std::to_string(i) + ".txt";
    testsupport::write_file(w.root() / name, std::string(static_cast<std::size_t>(i + 1), 'x') + "\n");
    inputs.push_back({"lfn://t/" + name, name, "file://" + (w.root() / name).string(), FileKind::data, 0, {}});
  }
  std::vector<AnalysisRecord> results(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] {
      RunOptions o;
      o.seed = static_cast<std::uint64_t>(i);
      o.failure_rate = 0;
      results[i] = w.pipelines().submit_analysis(u, pid, 1, {{"A", "x", inputs[i]}}, o);
    });
  }
  for (auto& t : threads) t.join();
  std::set<Id> ids;
  for (int i = 0; i < 4; ++i) {
    CHECK(results[i].status == AnalysisStatus::completed);
    ids.insert(results[i].analysis_id);
    for (const auto& o : results[i].outputs) {
      if (o.step_id == "A") CHECK(load_local(std::get<FileRef>(o.value)) == std::string(static_cast<std::size_t>(i + 1), 'x') + "\n");
    }
  }
  CHECK(ids.size() == 4);
  CHECK(w.persistency().audit().empty());
}
