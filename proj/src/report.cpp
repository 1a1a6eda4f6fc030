#include "gazeprobe/report.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gazeprobe/errors.hpp"
#include "gazeprobe/svg.hpp"
#include "json.hpp"

namespace gazeprobe::report {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json result_json(const stats::CorrelationResult& r) {
  return {{"metric", stats::metric_name(r.metric)},
          {"coefficient", r.degenerate ? json(nullptr) : number_or_null(r.coefficient)},
          {"p_value", r.degenerate ? json(nullptr) : number_or_null(r.p_value)},
          {"n", r.n},
          {"degenerate", r.degenerate},
          {"significant", r.significant()}};
}

stats::CorrelationResult result_from(const json& j) {
  stats::CorrelationResult r;
  r.metric = stats::parse_metric(j.at("metric").get<std::string>()).value();
  r.coefficient = number_from(j.at("coefficient"));
  r.p_value = number_from(j.at("p_value"));
  r.n = j.at("n").get<std::size_t>();
  r.degenerate = j.at("degenerate").get<bool>();
  return r;
}

std::vector<std::string> path_strings(const std::vector<std::filesystem::path>& v) {
  std::vector<std::string> out;
  for (const auto& p : v) out.push_back(p.string());
  return out;
}

// Execution details (thread count, processing order) are left out so they
// cannot change the report bytes.
json config_json(const probe::ProbeConfig& c) {
  std::vector<std::string> measures;
  for (auto m : c.measures) measures.emplace_back(gaze::measure_name(m));
  return {{"weights", c.weights.string()},
          {"vocab", c.vocab.string()},
          {"merges", c.merges.string()},
          {"gaze", c.gaze.string()},
          {"task", probe::task_filter_name(c.task)},
          {"measures", measures},
          {"metric", stats::metric_name(c.metric)},
          {"cross_check", c.cross_check},
          {"agg", probe::agg_name(c.agg)},
          {"min_participants", c.min_participants},
          {"ffn_reduce", align::reduction_name(c.ffn_reduce)},
          {"attn_mode", align::attn_mode_name(c.attn_mode)},
          {"pooling", probe::pooling_name(c.pooling)},
          {"prob_transform", probe::prob_transform_name(c.prob_transform)},
          {"slm", path_strings(c.slm_models)},
          {"out", c.out_dir.string()},
          {"seed", c.seed},
          {"dump_pairs", c.dump_pairs}};
}

template <class T>
T parsed(std::optional<T> v, const json& j) {
  if (!v) throw DataError("report: unrecognized value " + j.dump());
  return *v;
}

probe::ProbeConfig config_from(const json& j) {
  probe::ProbeConfig c;
  c.weights = j.at("weights").get<std::string>();
  c.vocab = j.at("vocab").get<std::string>();
  c.merges = j.at("merges").get<std::string>();
  c.gaze = j.at("gaze").get<std::string>();
  c.task = parsed(probe::parse_task_filter(j.at("task").get<std::string>()), j.at("task"));
  c.measures.clear();
  for (const auto& m : j.at("measures")) c.measures.push_back(parsed(gaze::parse_measure(m.get<std::string>()), m));
  c.metric = parsed(stats::parse_metric(j.at("metric").get<std::string>()), j.at("metric"));
  c.cross_check = j.at("cross_check").get<bool>();
  c.agg = parsed(probe::parse_agg(j.at("agg").get<std::string>()), j.at("agg"));
  c.min_participants = j.at("min_participants").get<int>();
  c.ffn_reduce = parsed(align::parse_reduction(j.at("ffn_reduce").get<std::string>()), j.at("ffn_reduce"));
  c.attn_mode = parsed(align::parse_attn_mode(j.at("attn_mode").get<std::string>()), j.at("attn_mode"));
  c.pooling = parsed(probe::parse_pooling(j.at("pooling").get<std::string>()), j.at("pooling"));
  c.prob_transform =
      parsed(probe::parse_prob_transform(j.at("prob_transform").get<std::string>()), j.at("prob_transform"));
  for (const auto& s : j.at("slm")) c.slm_models.emplace_back(s.get<std::string>());
  c.out_dir = j.at("out").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dump_pairs = j.at("dump_pairs").get<bool>();
  return c;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

std::string slug(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string to_json(const probe::ProbeReport& r) {
  json tables = json::array();
  for (const auto& t : r.tables) {
    json rows = json::array();
    for (const auto& row : t.cells) {
      json cells = json::array();
      for (const auto& c : row) {
        json cell = result_json(c.result);
        if (!c.cross.empty()) {
          json cross = json::array();
          for (const auto& x : c.cross) cross.push_back(result_json(x));
          cell["cross"] = std::move(cross);
        }
        cells.push_back(std::move(cell));
      }
      rows.push_back(std::move(cells));
    }
    tables.push_back({{"scope", t.scope},
                      {"measure", t.measure},
                      {"rows", t.row_labels},
                      {"columns", t.col_labels},
                      {"cells", std::move(rows)}});
  }
  json groups = json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"scope", g.scope},
                      {"measure", g.measure},
                      {"group", g.group.name},
                      {"first_layer", g.group.first},
                      {"last_layer", g.group.last},
                      {"mean_coefficient", number_or_null(g.mean_coefficient)}});
  }
  json rejected = json::array();
  for (const auto& x : r.rejected) {
    rejected.push_back({{"task", x.task}, {"sentence_id", x.sentence_id}, {"reason", x.reason}});
  }
  json model = nullptr;
  if (r.model) {
    model = {{"n_layer", r.model->n_layer},
             {"n_head", r.model->n_head},
             {"d_model", r.model->d_model},
             {"vocab_size", r.model->vocab_size}};
  }
  json skipped = json::object();
  for (const auto& [id, why] : r.skipped_models) skipped[id] = why;
  const json doc = {{"tool", "gazeprobe"},
                    {"version", GAZEPROBE_VERSION},
                    {"probe", r.probe},
                    {"config", config_json(r.config)},
                    {"model", std::move(model)},
                    {"sentences_processed", r.sentences_processed},
                    {"eligible_words", r.eligible_words},
                    {"rejected", std::move(rejected)},
                    {"skipped_models", std::move(skipped)},
                    {"tables", std::move(tables)},
                    {"groups", std::move(groups)}};
  return doc.dump(2) + "\n";
}

probe::ProbeReport from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    probe::ProbeReport r;
    r.probe = doc.at("probe").get<std::string>();
    r.config = config_from(doc.at("config"));
    if (!doc.at("model").is_null()) {
      const auto& m = doc.at("model");
      r.model = probe::ModelInfo{m.at("n_layer").get<int>(), m.at("n_head").get<int>(), m.at("d_model").get<int>(),
                                 m.at("vocab_size").get<int>()};
    }
    r.sentences_processed = doc.at("sentences_processed").get<std::map<std::string, std::size_t>>();
    r.eligible_words = doc.at("eligible_words").get<std::map<std::string, std::size_t>>();
    for (const auto& x : doc.at("rejected")) {
      r.rejected.push_back(
          {x.at("task").get<std::string>(), x.at("sentence_id").get<int>(), x.at("reason").get<std::string>()});
    }
    r.skipped_models = doc.at("skipped_models").get<std::map<std::string, std::string>>();
    for (const auto& t : doc.at("tables")) {
      probe::CorrelationTable table;
      table.scope = t.at("scope").get<std::string>();
      table.measure = t.at("measure").get<std::string>();
      table.row_labels = t.at("rows").get<std::vector<std::string>>();
      table.col_labels = t.at("columns").get<std::vector<std::string>>();
      for (const auto& row : t.at("cells")) {
        std::vector<probe::Cell> cells;
        for (const auto& c : row) {
          probe::Cell cell{result_from(c), {}};
          if (c.contains("cross")) {
            for (const auto& x : c.at("cross")) cell.cross.push_back(result_from(x));
          }
          cells.push_back(std::move(cell));
        }
        table.cells.push_back(std::move(cells));
      }
      r.tables.push_back(std::move(table));
    }
    for (const auto& g : doc.at("groups")) {
      r.groups.push_back({g.at("scope").get<std::string>(),
                          g.at("measure").get<std::string>(),
                          {g.at("group").get<std::string>(), g.at("first_layer").get<int>(),
                           g.at("last_layer").get<int>()},
                          number_from(g.at("mean_coefficient"))});
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
}

std::string table_csv(const probe::CorrelationTable& t, CsvField field) {
  std::string out = "row";
  for (const auto& c : t.col_labels) out += "," + csv_field(c);
  out += "\n";
  for (std::size_t i = 0; i < t.cells.size(); ++i) {
    out += csv_field(t.row_labels.at(i));
    for (const auto& cell : t.cells[i]) {
      const auto& r = cell.result;
      out += ",";
      switch (field) {
        case CsvField::Coefficient: out += format_double(r.degenerate ? kNaN : r.coefficient); break;
        case CsvField::PValue: out += format_double(r.degenerate ? kNaN : r.p_value); break;
        case CsvField::N: out += std::to_string(r.n); break;
      }
    }
    out += "\n";
  }
  return out;
}

CsvMatrix parse_csv(std::string_view text) {
  CsvMatrix m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1) {
      m.col_labels.assign(fields.begin() + 1, fields.end());
      continue;
    }
    if (fields.size() != m.col_labels.size() + 1) {
      throw DataError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(m.col_labels.size() + 1) +
                      " fields, got " + std::to_string(fields.size()));
    }
    m.row_labels.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto& f = fields[i];
      if (f == "NA") {
        row.push_back(kNaN);
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw DataError("csv line " + std::to_string(line_no) + ": bad number '" + f + "'");
      }
      row.push_back(v);
    }
    m.values.push_back(std::move(row));
  }
  return m;
}

std::string pairs_tsv(const std::vector<probe::PairRecord>& pairs) {
  std::string out = "scope\tsignal\tmeasure\ttask\tsentence_id\tword_index\tmodel_value\tgaze_value\n";
  for (const auto& p : pairs) {
    out += p.scope + "\t" + p.signal + "\t" + p.measure + "\t" + std::string(gaze::task_name(p.key.task)) + "\t" +
           std::to_string(p.key.sentence_id) + "\t" + std::to_string(p.key.word_index) + "\t" +
           format_double(p.model_value) + "\t" + format_double(p.gaze_value) + "\n";
  }
  return out;
}

std::string table_stem(const probe::ProbeReport& r, const probe::CorrelationTable& t) {
  std::string stem = r.probe + "_" + slug(t.scope);
  if (!t.measure.empty()) stem += "_" + slug(t.measure);
  return stem;
}

std::vector<std::filesystem::path> emit_report(const probe::ProbeReport& r, const std::filesystem::path& dir,
                                               const std::vector<Format>& formats) {
  if (r.tables.empty()) throw DataError("report has no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  auto wants = [&](Format f) { return std::ranges::find(formats, f) != formats.end(); };
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    write_file(path, content);
    written.push_back(path);
  };
  if (wants(Format::Json)) emit(r.probe + "_report.json", to_json(r));
  for (const auto& t : r.tables) {
    const std::string stem = table_stem(r, t);
    if (wants(Format::Csv)) {
      emit(stem + ".csv", table_csv(t, CsvField::Coefficient));
      emit(stem + "_p.csv", table_csv(t, CsvField::PValue));
      emit(stem + "_n.csv", table_csv(t, CsvField::N));
    }
    if (wants(Format::Svg)) {
      svg::HeatmapOptions opt;
      opt.title = r.probe + " " + t.scope + (t.measure.empty() ? "" : " " + t.measure) + " (" +
                  std::string(stats::metric_name(r.config.metric)) + ")";
      emit(stem + ".svg", svg::heatmap(t, opt));
    }
  }
  if (r.config.dump_pairs && !r.pairs.empty()) emit(r.probe + "_pairs.tsv", pairs_tsv(r.pairs));
  return written;
}

}  // namespace gazeprobe::report
