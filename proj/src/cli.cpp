#include "abase/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "abase/crawler.hpp"
#include "abase/error.hpp"
#include "abase/gateway.hpp"
#include "abase/http.hpp"
#include "abase/metadata_xml.hpp"
#include "abase/synthetic.hpp"

namespace abase {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
}

std::string attrs_text(const json& attrs) {
  std::string s;
  for (const auto& [k, v] : attrs.items()) {
    if (!s.empty()) s += ' ';
    s += k + "=" + v.at("value").get<std::string>();
  }
  return s;
}

void print_text(std::ostream& out, const std::string& command, const json& r) {
  if (command == "register-user" || command == "set-user-active") {
    out << r.at("user_id").get<std::string>() << "  " << r.at("name").get<std::string>() << "  "
        << r.at("role").get<std::string>() << (r.at("active").get<bool>() ? "" : "  (inactive)")
        << "\n";
  } else if (command == "register-algorithm") {
    out << r.at("algorithm_id").get<std::string>() << "  " << r.at("name").get<std::string>()
        << "\n";
  } else if (command == "register-pipeline" || command == "update-pipeline") {
    out << r.at("pipeline").at("pipeline_id").get<std::string>() << "@"
        << r.at("version").get<int>() << "  " << r.at("pipeline").at("name").get<std::string>()
        << "\n";
  } else if (command == "index") {
    out << r.at("dataset_id").get<std::string>() << "  " << r.at("name").get<std::string>() << "  "
        << r.at("item_count").get<std::size_t>() << " items, "
        << r.at("image_file_count").get<std::size_t>() << " image files, "
        << r.at("data_file_count").get<std::size_t>() << " data files\n";
    for (const auto& w : r.at("warnings")) out << "warning: " << w.get<std::string>() << "\n";
  } else if (command == "run-analysis" || command == "rerun") {
    const auto& a = r.at("analysis");
    out << a.at("analysis_id").get<std::string>() << "  " << r.at("status").get<std::string>()
        << "\n";
    for (const auto& o : a.at("outputs")) {
      out << "  " << o.at("step_id").get<std::string>() << "." << o.at("port").get<std::string>();
      if (o.at("value").contains("file")) {
        out << "  " << o.at("value").at("file").at("lfn").get<std::string>();
      }
      out << "\n";
    }
    if (r.contains("errors")) {
      for (const auto& e : r.at("errors")) out << "error: " << e.get<std::string>() << "\n";
    }
  } else if (command == "query-items") {
    out << r.at("count").get<std::size_t>() << " item(s) match " << r.at("filter").get<std::string>()
        << "\n";
    for (const auto& h : r.at("items")) {
      const auto& it = h.at("item");
      out << h.at("dataset_id").get<std::string>() << "  " << it.at("item_id").get<std::string>()
          << "  " << std::left << std::setw(16) << it.at("source_subfolder").get<std::string>()
          << "  " << attrs_text(it.at("attributes")) << "\n";
    }
  } else if (command == "query-pipelines") {
    for (const auto& p : r.at("pipelines")) {
      out << p.at("pipeline_id").get<std::string>() << "  " << p.at("name").get<std::string>()
          << "  versions " << p.at("versions").size() << "\n";
    }
  } else if (command == "audit") {
    if (r.at("healthy").get<bool>()) {
      out << "store healthy\n";
    } else {
      for (const auto& p : r.at("problems")) out << p.get<std::string>() << "\n";
    }
  } else {
    out << r.dump(2) << "\n";
  }
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"abase: catalog of datasets, pipelines, analyses and their provenance"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string store_root, config_file, caller, format = "text";
  app.add_option("--store", store_root, "Store directory (overrides the config file)");
  app.add_option("--config", config_file, "JSON configuration file");
  app.add_option("--caller", caller, "Acting user id");
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"text", "machine", "machine-readable"}));

  // crawl
  std::string crawl_root, crawl_name, crawl_out, crawl_seed;
  auto* crawl = app.add_subcommand("crawl", "Generate metadata XML for a dataset tree");
  crawl->add_option("root", crawl_root, "Dataset root directory")->required();
  crawl->add_option("--name", crawl_name, "Dataset name")->required();
  crawl->add_option("--out", crawl_out, "Write the metadata document here");
  crawl->add_option("--seed-manifest", crawl_seed,
                    "Earlier metadata document to report changes against");

  // generate-cohort
  std::string cohort_root, cohort_truth;
  std::size_t cohort_n = 200;
  std::uint64_t cohort_seed = 1;
  auto* gen = app.add_subcommand("generate-cohort", "Write a synthetic study cohort");
  gen->add_option("root", cohort_root)->required();
  gen->add_option("--subjects", cohort_n)->capture_default_str();
  gen->add_option("--seed", cohort_seed)->capture_default_str();
  gen->add_option("--truth", cohort_truth, "Write ground truth JSON here");

  // index
  std::string idx_meta, idx_root, idx_name, idx_vis = "private", idx_ref, idx_prefix;
  auto* index = app.add_subcommand("index", "Index a dataset by reference");
  auto* idx_meta_opt = index->add_option("--metadata", idx_meta, "Metadata XML file");
  auto* idx_root_opt = index->add_option("--root", idx_root, "Crawl this tree first");
  idx_meta_opt->excludes(idx_root_opt);
  index->add_option("--name", idx_name, "Dataset name when crawling");
  index->add_option("--visibility", idx_vis, "private, public or shared:<id>,<id>")
      ->capture_default_str();
  index->add_option("--source-ref", idx_ref, "Where the metadata came from");
  auto* idx_prefix_opt = index->add_option("--url-prefix", idx_prefix, "Storage URL prefix");

  // users
  std::string u_name, u_org, u_role = "neuroscientist", u_id;
  bool u_active = true;
  auto* reg_user = app.add_subcommand("register-user", "Register a user");
  reg_user->add_option("--name", u_name)->required();
  reg_user->add_option("--organisation", u_org);
  reg_user->add_option("--role", u_role)->capture_default_str();
  auto* set_active = app.add_subcommand("set-user-active", "Activate or deactivate a user");
  set_active->add_option("user", u_id)->required();
  set_active->add_option("--active", u_active)->required();

  // algorithms and pipelines
  std::string a_name, a_toolkit, a_lfn;
  auto* reg_alg = app.add_subcommand("register-algorithm", "Register an algorithm");
  reg_alg->add_option("--name", a_name)->required();
  reg_alg->add_option("--toolkit", a_toolkit);
  reg_alg->add_option("--executable-lfn", a_lfn)->required();

  std::string p_def, p_lfn, p_desc, p_name, p_id;
  auto* reg_pipe = app.add_subcommand("register-pipeline", "Register a pipeline (version 1)");
  reg_pipe->add_option("--definition", p_def, "Pipeline definition file")->required();
  reg_pipe->add_option("--lfn", p_lfn)->required();
  reg_pipe->add_option("--description", p_desc);
  reg_pipe->add_option("--name", p_name, "Overrides the name in the definition");
  auto* upd_pipe = app.add_subcommand("update-pipeline", "Add a pipeline version");
  upd_pipe->add_option("pipeline", p_id)->required();
  upd_pipe->add_option("--definition", p_def)->required();
  upd_pipe->add_option("--lfn", p_lfn)->required();
  upd_pipe->add_option("--description", p_desc);

  // analyses
  std::string r_pipeline, r_analysis;
  std::vector<std::string> r_inputs;
  std::size_t r_resources = 0;
  std::uint64_t r_seed = 0;
  double r_failure = -1;
  auto* run = app.add_subcommand("run-analysis", "Run a pipeline version");
  run->add_option("--pipeline", r_pipeline, "<id>@<version>")->required();
  run->add_option("--input", r_inputs, "<step>.<port>=<value>");
  auto* run_res = run->add_option("--resources", r_resources);
  auto* run_seed = run->add_option("--seed", r_seed);
  auto* run_fail = run->add_option("--failure-rate", r_failure);
  auto* rerun = app.add_subcommand("rerun", "Re-run an analysis from its provenance");
  rerun->add_option("analysis", r_analysis)->required();
  rerun->add_option("--override", r_inputs, "<step>.<port>=<value>");
  auto* rerun_res = rerun->add_option("--resources", r_resources);
  auto* rerun_seed = rerun->add_option("--seed", r_seed);
  auto* rerun_fail = rerun->add_option("--failure-rate", r_failure);

  // queries
  std::string q_filter, q_dataset, q_template, q_pipeline, q_analysis, q_lfn, q_name, q_alg,
      q_author;
  std::int64_t q_limit = -1, q_offset = 0;
  bool q_pipelines = false;
  auto* query = app.add_subcommand("query", "Filter data items or ask provenance questions");
  query->add_option("--filter", q_filter, "e.g. \"subject_sex=M&subject_age>50\"");
  query->add_option("--dataset", q_dataset);
  auto* q_limit_opt = query->add_option("--limit", q_limit);
  auto* q_offset_opt = query->add_option("--offset", q_offset);
  query->add_flag("--pipelines", q_pipelines, "List pipelines instead of items");
  query->add_option("--name", q_name);
  query->add_option("--algorithm", q_alg);
  query->add_option("--author", q_author);
  query->add_option("--template", q_template, "who, when, outputs, inputs, correctness");
  query->add_option("--pipeline", q_pipeline);
  query->add_option("--analysis", q_analysis);
  query->add_option("--lfn", q_lfn);

  std::string prov_id;
  auto* prov = app.add_subcommand("provenance", "Provenance reports");
  prov->require_subcommand(1);
  auto* prov_show = prov->add_subcommand("show", "Reconstruct an analysis");
  prov_show->add_option("analysis", prov_id)->required();

  std::string an_kind, an_target, an_text;
  auto* annotate = app.add_subcommand("annotate", "Attach a note to an analysis, pipeline version or dataset");
  annotate->add_option("--target-kind", an_kind, "analysis, pipeline_version or dataset")->required();
  annotate->add_option("--target", an_target)->required();
  annotate->add_option("--text", an_text)->required();

  std::string show_id;
  auto* show_ds = app.add_subcommand("show-dataset", "Print a dataset record");
  show_ds->add_option("dataset", show_id)->required();
  auto* show_an = app.add_subcommand("show-analysis", "Print an analysis record");
  show_an->add_option("analysis", show_id)->required();

  auto* audit = app.add_subcommand("audit", "Check referential integrity of the store");
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const bool machine = format != "text";
  std::string command;
  auto emit = [&](const json& r) {
    if (machine) {
      out << r.dump(2) << "\n";
    } else {
      print_text(out, command, r);
    }
  };

  try {
    Config config = config_file.empty() ? Config{} : load_config(config_file);
    if (!store_root.empty()) config.store_root = store_root;

    if (*crawl) {
      auto d = crawl_dataset(fs::absolute(crawl_root).lexically_normal(), crawl_name);
      auto xml = serialize_metadata(d);
      json r = {{"dataset_name", d.dataset_name},
                {"root_path", d.root_path},
                {"item_count", d.items.size()},
                {"warnings", d.warnings}};
      if (!crawl_seed.empty()) {
        auto previous = parse_metadata_or_throw(read_file(crawl_seed));
        auto c = diff_descriptors(previous, d);
        r["changes"] = {{"added", c.added}, {"removed", c.removed}, {"modified", c.modified}};
      }
      if (!crawl_out.empty()) {
        write_file(crawl_out, xml);
        r["metadata_file"] = crawl_out;
      }
      if (machine) {
        out << r.dump(2) << "\n";
      } else if (crawl_out.empty() && crawl_seed.empty()) {
        out << xml;
      } else {
        out << d.items.size() << " items in " << d.dataset_name << "\n";
        for (const auto& w : d.warnings) out << "warning: " << w << "\n";
        if (r.contains("changes")) {
          for (const auto& k : {"added", "removed", "modified"}) {
            for (const auto& p : r["changes"][k]) out << k << " " << p.get<std::string>() << "\n";
          }
        }
      }
      return 0;
    }
    if (*gen) {
      auto truth = generate_cohort(cohort_root, cohort_n, cohort_seed);
      json subjects = json::array();
      for (const auto& s : truth.subjects) {
        subjects.push_back({{"folder", s.folder},
                            {"sex", s.sex ? json(*s.sex) : json(nullptr)},
                            {"age", s.age ? json(*s.age) : json(nullptr)},
                            {"assessments", s.assessments ? json(*s.assessments) : json(nullptr)},
                            {"stage", s.stage},
                            {"scenario_member", scenario_member(s)}});
      }
      json r = {{"root", fs::absolute(cohort_root).lexically_normal().string()},
                {"subjects", truth.subjects.size()},
                {"seed", cohort_seed},
                {"scenario_filter", kScenarioFilter},
                {"scenario_members", truth.scenario_members()}};
      if (!cohort_truth.empty()) {
        json full = r;
        full["subject_truth"] = subjects;
        write_file(cohort_truth, full.dump(2) + "\n");
      }
      if (machine) {
        out << r.dump(2) << "\n";
      } else {
        out << truth.subjects.size() << " subjects written to " << r["root"].get<std::string>()
            << "; " << truth.scenario_members().size() << " match " << kScenarioFilter << "\n";
      }
      return 0;
    }
    if (*serve_cmd) return serve(config);

    AnalysisBase base(config);
    json r;
    if (*index) {
      command = "index";
      std::string xml;
      Params params{{"visibility", idx_vis}};
      if (!idx_ref.empty()) params["source_ref"] = idx_ref;
      if (*idx_prefix_opt) params["url_prefix"] = idx_prefix;
      if (!idx_meta.empty()) {
        xml = read_file(idx_meta);
      } else if (!idx_root.empty()) {
        if (idx_name.empty()) throw Error(ErrorKind::validation, "--root needs --name");
        xml = serialize_metadata(crawl_dataset(fs::absolute(idx_root).lexically_normal(), idx_name));
      } else {
        throw Error(ErrorKind::validation, "index needs --metadata or --root");
      }
      r = base.import_dataset(caller, xml, params);
    } else if (*reg_user) {
      command = "register-user";
      r = base.register_user(caller, {{"name", u_name}, {"organisation", u_org}, {"role", u_role}});
    } else if (*set_active) {
      command = "set-user-active";
      r = base.set_user_active(caller, u_id, {{"active", u_active}});
    } else if (*reg_alg) {
      command = "register-algorithm";
      r = base.register_algorithm(caller,
                                  {{"name", a_name}, {"toolkit", a_toolkit}, {"executable_lfn", a_lfn}});
    } else if (*reg_pipe) {
      command = "register-pipeline";
      json body = {{"definition", read_file(p_def)}, {"lfn", p_lfn}, {"description", p_desc}};
      if (!p_name.empty()) body["name"] = p_name;
      r = base.register_pipeline(caller, body);
    } else if (*upd_pipe) {
      command = "update-pipeline";
      r = base.update_pipeline(caller, p_id,
                               {{"definition", read_file(p_def)}, {"lfn", p_lfn}, {"description", p_desc}});
    } else if (*run || *rerun) {
      command = *run ? "run-analysis" : "rerun";
      json body = json::object();
      if (*run ? run_res->count() : rerun_res->count()) body["resources"] = r_resources;
      if (*run ? run_seed->count() : rerun_seed->count()) body["seed"] = r_seed;
      if (*run ? run_fail->count() : rerun_fail->count()) body["failure_rate"] = r_failure;
      if (*run) {
        body["pipeline"] = r_pipeline;
        body["inputs"] = r_inputs;
        r = base.run_analysis(caller, body);
      } else {
        body["overrides"] = r_inputs;
        r = base.rerun_analysis(caller, r_analysis, body);
      }
      emit(r);
      return r.at("status") == "failed" ? 2 : 0;
    } else if (*query) {
      Params params;
      auto set = [&](const char* key, const std::string& v) {
        if (!v.empty()) params[key] = v;
      };
      if (!q_template.empty()) {
        command = "query-template";
        set("pipeline", q_pipeline);
        set("analysis", q_analysis);
        set("lfn", q_lfn);
        r = base.query_template(q_template, params);
      } else if (q_pipelines) {
        command = "query-pipelines";
        set("name", q_name);
        set("algorithm", q_alg);
        set("author", q_author);
        r = base.query_pipelines(params);
      } else {
        command = "query-items";
        set("filter", q_filter);
        set("dataset", q_dataset);
        if (q_limit_opt->count()) params["limit"] = std::to_string(q_limit);
        if (q_offset_opt->count()) params["offset"] = std::to_string(q_offset);
        r = base.query_items(caller, params);
      }
    } else if (*prov_show) {
      if (!machine) {
        out << base.provenance_text(prov_id);
        return 0;
      }
      r = base.provenance_of(prov_id);
    } else if (*annotate) {
      command = "annotate";
      r = base.annotate(caller, {{"target_kind", an_kind}, {"target", an_target}, {"text", an_text}});
    } else if (*show_ds) {
      r = base.get_dataset(caller, show_id);
    } else if (*show_an) {
      r = base.get_analysis(show_id);
    } else if (*audit) {
      command = "audit";
      r = base.audit();
      emit(r);
      return r.at("healthy").get<bool>() ? 0 : exit_code(ErrorKind::state);
    }
    emit(r);
    return 0;
  } catch (const Error& e) {
    if (machine) out << error_json(e).dump(2) << "\n";
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    for (const auto& d : e.details()) err << "  " << d << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace abase
