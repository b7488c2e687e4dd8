#include "crossgrid/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace crossgrid::selection {

using metadata::ColumnKind;
using metadata::Encoding;

namespace {

double number(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error("not a number: '" + s + "'");
  return v;
}

}  // namespace

FittedPipeline fit_pipeline(const metadata::DescriptionTable& sources, Encoding encoding, bool scale) {
  if (sources.size() == 0) throw Error("fit_pipeline: no source buildings");
  FittedPipeline p;
  p.schema = sources.schema;
  p.encoding = encoding;
  p.scaled = scale;
  auto imputed = metadata::impute_most_frequent(sources);
  for (std::size_t c = 0; c < p.schema.width(); ++c) {
    p.modes.push_back(metadata::column_mode(sources, c));
    p.vocabularies.push_back(p.schema.columns[c].kind == ColumnKind::numeric ? std::vector<std::string>{}
                                                                               : metadata::column_vocabulary(imputed, c));
  }
  auto encoded = metadata::encode(imputed, encoding);
  p.columns = encoded.columns;
  const auto w = encoded.values.cols();
  p.offset = Eigen::RowVectorXd::Zero(w);
  p.span = Eigen::RowVectorXd::Ones(w);
  if (scale) {
    p.offset = encoded.values.colwise().minCoeff();
    Eigen::RowVectorXd hi = encoded.values.colwise().maxCoeff();
    for (Eigen::Index c = 0; c < w; ++c) {
      // constant columns: sources sit at 0 and a differing target keeps its raw offset
      p.span(c) = hi(c) > p.offset(c) ? hi(c) - p.offset(c) : 1.0;
    }
  }
  return p;
}

Eigen::RowVectorXd FittedPipeline::transform(const metadata::BuildingDescription& d) const {
  if (d.values.size() != schema.width()) {
    throw Error("description of '" + d.building_id + "' has " + std::to_string(d.values.size()) +
                " attributes, schema has " + std::to_string(schema.width()));
  }
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(offset.size());
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < schema.width(); ++c) {
    const auto& col = schema.columns[c];
    const auto& cell = d.values[c] ? d.values[c] : modes[c];
    if (!cell) throw Error("column '" + col.name + "' has no value to impute");
    const auto& vocab = vocabularies[c];
    if (col.kind == ColumnKind::numeric) {
      x(pos++) = number(*cell);
    } else {
      auto at = static_cast<Eigen::Index>(std::find(vocab.begin(), vocab.end(), *cell) - vocab.begin());
      if (encoding == Encoding::label) {
        // unseen values take the next code
        x(pos++) = static_cast<double>(at);
      } else {
        if (at < static_cast<Eigen::Index>(vocab.size())) x(pos + at) = 1.0;
        pos += static_cast<Eigen::Index>(vocab.size());
      }
    }
  }
  return (x - offset).cwiseQuotient(span);
}

SelectionRule SelectionRule::parse(std::string_view s) {
  auto fail = [&] { return Error("bad selection rule '" + std::string(s) + "' (expected top-K or within-D)"); };
  if (s.rfind("top-", 0) == 0) {
    std::size_t k = 0;
    auto rest = s.substr(4);
    auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (ec != std::errc() || p != rest.data() + rest.size()) throw fail();
    SelectionRule r = top(k);
    r.validate();
    return r;
  }
  if (s.rfind("within-", 0) == 0) {
    SelectionRule r = within(number(std::string(s.substr(7))));
    r.validate();
    return r;
  }
  throw fail();
}

std::string SelectionRule::to_string() const {
  if (kind == Kind::top_k) return "top-" + std::to_string(k);
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, max_distance);
  return "within-" + std::string(buf, p);
}

void SelectionRule::validate() const {
  if (kind == Kind::top_k && k == 0) throw Error("selection rule: k must be >= 1");
  if (kind == Kind::threshold && !(max_distance >= 0.0)) throw Error("selection rule: distance threshold must be >= 0");
}

std::vector<std::string> SelectionResult::ids() const {
  std::vector<std::string> out;
  for (const auto& s : sources) out.push_back(s.building_id);
  return out;
}

SelectionResult select_sources(const metadata::BuildingDescription& target, const metadata::DescriptionTable& sources,
                               const SelectionRule& rule, Encoding encoding) {
  rule.validate();
  if (sources.size() == 0) throw Error("select_sources: no source buildings");
  auto pipeline = fit_pipeline(sources, encoding);
  const Eigen::RowVectorXd t = pipeline.transform(target);
  auto imputed = metadata::impute_most_frequent(sources);

  std::vector<RankedSource> ranked;
  ranked.reserve(sources.size());
  for (const auto& row : imputed.rows) {
    ranked.push_back({row.building_id, (pipeline.transform(row) - t).norm()});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedSource& a, const RankedSource& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return id_less(a.building_id, b.building_id);
  });
  if (rule.kind == SelectionRule::Kind::top_k) {
    ranked.resize(std::min(rule.k, ranked.size()));
  } else {
    ranked.erase(std::find_if(ranked.begin(), ranked.end(),
                              [&](const RankedSource& r) { return r.distance > rule.max_distance; }),
                 ranked.end());
  }
  return {std::move(ranked), encoding, rule};
}

metadata::DescriptionTable without(const metadata::DescriptionTable& table, std::string_view id) {
  auto out = table;
  std::erase_if(out.rows, [&](const metadata::BuildingDescription& r) { return r.building_id == id; });
  return out;
}

std::string_view to_string(NormFit f) { return f == NormFit::global ? "global" : "per-building"; }

NormFit parse_norm_fit(std::string_view s) {
  if (s == "global") return NormFit::global;
  if (s == "per-building") return NormFit::per_building;
  throw Error("unknown normalisation fit '" + std::string(s) + "' (expected global or per-building)");
}

timeseries::SequenceDataset assemble_training_set(const SelectionResult& selected,
                                                  const std::map<std::string, SourceData>& data,
                                                  const std::optional<DayRange>& range, NormFit fit) {
  using namespace timeseries;
  std::vector<std::string> diagnostics;
  std::vector<std::pair<std::string, const SourceData*>> kept;
  for (const auto& src : selected.sources) {
    auto it = data.find(src.building_id);
    if (it == data.end()) {
      diagnostics.push_back("dropped building '" + src.building_id + "': no energy or weather data");
      continue;
    }
    if (count_windows(it->second.energy, it->second.weather, range) == 0) {
      diagnostics.push_back("dropped building '" + src.building_id +
                            "': no 14 consecutive days with consumption and weather" +
                            (range ? " in " + range->to_string() : std::string()));
      continue;
    }
    kept.emplace_back(src.building_id, &it->second);
  }
  if (kept.empty()) {
    std::string msg = "no selected building has usable training data";
    for (const auto& d : diagnostics) msg += "; " + d;
    throw Error(msg);
  }

  std::array<std::vector<const DailySeries*>, channel_count> channels;
  for (const auto& [id, d] : kept) {
    channels[consumption].push_back(&d->energy);
    for (std::size_t c = 0; c < 3; ++c) channels[1 + c].push_back(&d->weather.channels[c]);
  }
  SequenceDataset out;
  out.stats = fit_minmax(channels, range);
  out.diagnostics = std::move(diagnostics);
  for (const auto& [id, d] : kept) {
    auto stats = fit == NormFit::global ? out.stats : fit_minmax(d->energy, d->weather, range);
    auto part = build_windows(d->energy, d->weather, stats, range);
    for (auto& w : part.windows) {
      w.building_id = id;
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

timeseries::SequenceDataset assemble_training_set(const SelectionResult& selected, const store::Store& store,
                                                  const std::optional<DayRange>& range, NormFit fit) {
  std::map<std::string, SourceData> data;
  std::vector<std::string> missing;
  for (const auto& src : selected.sources) {
    try {
      auto link = store.link(src.building_id);
      data[src.building_id] = {store.energy(link.series_id), store.weather(link.station_id)};
    } catch (const NotFound& e) {
      missing.push_back("building '" + src.building_id + "': " + e.what());
    }
  }
  auto out = assemble_training_set(selected, data, range, fit);
  out.diagnostics.insert(out.diagnostics.begin(), missing.begin(), missing.end());
  return out;
}

}  // namespace crossgrid::selection
