#include "treeview/treeview.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace treeview {

using nlohmann::json;

std::vector<RejectionEvent> compute_rejections(const DecisionPath& path, double threshold) {
  std::vector<RejectionEvent> events;
  if (path.steps.empty()) return events;
  const auto& leaf = path.steps.back().histogram;
  const std::size_t c = leaf.size();
  const auto exempt = static_cast<int>(argmax_first(leaf));
  for (std::size_t z = 0; z < c; ++z) {
    if (static_cast<int>(z) == exempt) continue;
    for (std::size_t t = 1; t < path.steps.size(); ++t) {
      const auto& h = path.steps[t].histogram;
      const double n = std::accumulate(h.begin(), h.end(), 0.0);
      const double share = n > 0 ? h[z] / n : 0.0;
      if (h[z] <= 0.0 || share < threshold) {
        events.push_back({static_cast<int>(z), t - 1, path.steps[t - 1].factor});
        break;
      }
    }
  }
  std::sort(events.begin(), events.end(), [](const RejectionEvent& a, const RejectionEvent& b) {
    return a.row != b.row ? a.row < b.row : a.class_id < b.class_id;
  });
  return events;
}

namespace {

std::vector<RankedFeature> top_features(const std::vector<double>& imp, const std::vector<std::string>& names,
                                        std::size_t r) {
  std::vector<std::size_t> order(imp.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
  std::vector<RankedFeature> out;
  for (std::size_t i = 0; i < order.size() && out.size() < r; ++i) {
    if (imp[order[i]] <= 0.0) break;
    out.push_back({order[i], order[i] < names.size() ? names[order[i]] : "f" + std::to_string(order[i]),
                   imp[order[i]]});
  }
  return out;
}

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string class_label(const TreeViewLayout& layout, int id) {
  if (id >= 0 && static_cast<std::size_t>(id) < layout.class_names.size()) {
    return layout.class_names[static_cast<std::size_t>(id)];
  }
  return "#" + std::to_string(id);
}

std::string row_test(const LayoutRow& row) {
  if (row.factor < 0) return "leaf";
  return "F" + std::to_string(row.factor) + "=" + std::to_string(row.value) + (row.took_equal ? " yes" : " no");
}

const char* status_name(CellStatus s) {
  switch (s) {
    case CellStatus::Alive: return "alive";
    case CellStatus::RejectedHere: return "rejected-here";
    case CellStatus::RejectedEarlier: return "rejected-earlier";
  }
  return "alive";
}

CellStatus status_from_name(const std::string& s) {
  if (s == "alive") return CellStatus::Alive;
  if (s == "rejected-here") return CellStatus::RejectedHere;
  if (s == "rejected-earlier") return CellStatus::RejectedEarlier;
  throw ValidationError("unknown cell status '" + s + "'");
}

}  // namespace

TreeViewLayout layout_from_meta(std::span<const int> meta, std::optional<int> true_label,
                                const ExplanationArtifacts& a, const RenderConfig& cfg) {
  if (a.importances.size() != a.tree.num_factors()) {
    throw ValidationError("importance table covers " + std::to_string(a.importances.size()) +
                          " factors, tree has " + std::to_string(a.tree.num_factors()));
  }
  if (a.class_names.size() != a.tree.num_classes()) {
    throw ValidationError("class name count does not match the surrogate");
  }
  const DecisionPath path = a.tree.path(meta);
  TreeViewLayout layout;
  layout.class_names = a.class_names;
  layout.meta_feature.assign(meta.begin(), meta.end());
  layout.rejections = compute_rejections(path, cfg.rejection_threshold);
  const std::size_t c = a.class_names.size();
  std::vector<std::size_t> reject_row(c, path.size());
  for (const auto& e : layout.rejections) reject_row[static_cast<std::size_t>(e.class_id)] = e.row;

  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto& step = path.steps[t];
    LayoutRow row;
    row.node = step.node;
    row.factor = step.factor;
    row.value = step.value;
    row.took_equal = step.took_equal;
    const double n = std::accumulate(step.histogram.begin(), step.histogram.end(), 0.0);
    for (std::size_t z = 0; z < c; ++z) {
      row.probability.push_back(n > 0 ? step.histogram[z] / n : 0.0);
      row.status.push_back(t < reject_row[z]    ? CellStatus::Alive
                           : t == reject_row[z] ? CellStatus::RejectedHere
                                                : CellStatus::RejectedEarlier);
    }
    if (step.factor >= 0) {
      row.top_features =
          top_features(a.importances[static_cast<std::size_t>(step.factor)], a.feature_names, cfg.top_features);
    }
    layout.rows.push_back(std::move(row));
  }
  layout.footer.predicted_class = a.tree.nodes()[static_cast<std::size_t>(path.steps.back().node)].leaf_class;
  layout.footer.true_class = true_label;
  return layout;
}

TreeViewLayout trace_explanation(std::span<const double> input_row, std::optional<int> true_label,
                                 const ExplanationArtifacts& a, const RenderConfig& cfg) {
  if (a.predictors.size() != a.tree.num_factors()) {
    throw ValidationError("artifact mismatch: " + std::to_string(a.predictors.size()) +
                          " factor predictors but the surrogate uses K=" + std::to_string(a.tree.num_factors()));
  }
  if (!a.predictors.empty() && input_row.size() != a.predictors.front().forest.num_features()) {
    throw ValidationError("expected " + std::to_string(a.predictors.front().forest.num_features()) +
                          " input features, got " + std::to_string(input_row.size()));
  }
  const auto meta = predict_meta_feature(a.predictors, input_row);
  return layout_from_meta(meta, true_label, a, cfg);
}

std::string render_svg(const TreeViewLayout& layout, const RenderConfig& cfg) {
  const int cell = std::max(8, cfg.cell_size);
  const int cols = static_cast<int>(layout.num_classes());
  const int rows = static_cast<int>(layout.rows.size());
  const int left = 70, header = 110, footer = 56;
  // annotation column: ~6.5 px per character at 11-12 px
  std::size_t chars = 52;
  for (const auto& row : layout.rows) {
    std::size_t n = 0;
    for (const auto& f : row.top_features) n += display_width(f.name) + 10;
    chars = std::max(chars, n);
  }
  const int right = 20 + static_cast<int>(chars * 13 / 2);
  const int width = left + cols * cell + right;
  const int height = header + rows * cell + footer;

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  o << "<text class=\"title\" x=\"8\" y=\"20\" font-size=\"14\" font-weight=\"bold\">TreeView: sample "
    << xml_escape(layout.sample_id) << "</text>\n";

  o << "<g class=\"header\">\n";
  for (int z = 0; z < cols; ++z) {
    const int x = left + z * cell + cell / 2;
    o << "<text class=\"class-name\" x=\"" << x << "\" y=\"" << header - 8 << "\" font-size=\"12\" transform=\"rotate(-40 "
      << x << ' ' << header - 8 << ")\">" << xml_escape(layout.class_names[static_cast<std::size_t>(z)]) << "</text>\n";
  }
  o << "</g>\n";

  o << "<g class=\"grid\">\n";
  for (int t = 0; t < rows; ++t) {
    const auto& row = layout.rows[static_cast<std::size_t>(t)];
    const int y = header + t * cell;
    o << "<text class=\"row-label\" x=\"8\" y=\"" << y + cell / 2 + 4 << "\" font-size=\"12\">"
      << (t == 0 ? "root" : row.factor < 0 ? "leaf" : "step " + std::to_string(t)) << "</text>\n";
    for (int z = 0; z < cols; ++z) {
      const auto st = row.status[static_cast<std::size_t>(z)];
      const double p = row.probability[static_cast<std::size_t>(z)];
      const int x = left + z * cell;
      o << "<rect class=\"cell " << status_name(st) << "\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\""
        << (st == CellStatus::RejectedEarlier ? cfg.earlier_color : cfg.fill_color) << "\" fill-opacity=\""
        << fixed(st == CellStatus::RejectedEarlier ? 0.35 : 0.08 + 0.92 * p, 3)
        << "\" stroke=\"#666666\" stroke-width=\"1\"/>\n";
      if (st == CellStatus::RejectedHere) {
        o << "<rect class=\"rejection-box\" x=\"" << x + 2 << "\" y=\"" << y + 2 << "\" width=\"" << cell - 4
          << "\" height=\"" << cell - 4 << "\" fill=\"none\" stroke=\"" << cfg.reject_color
          << "\" stroke-width=\"3\"/>\n";
      }
      o << "<text class=\"prob\" x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
        << "\" font-size=\"10\" text-anchor=\"middle\">"
        << (st == CellStatus::RejectedEarlier ? std::string("\xC3\x97") : fixed(p, 2)) << "</text>\n";
    }
    const int mx = left + cols * cell + 10;
    o << "<text class=\"factor-test\" x=\"" << mx << "\" y=\"" << y + cell / 2 - 4 << "\" font-size=\"12\">";
    if (row.factor < 0) {
      o << "leaf: predict " << xml_escape(class_label(layout, layout.footer.predicted_class));
    } else {
      o << "factor F" << row.factor << " = " << row.value << " ? " << (row.took_equal ? "yes" : "no");
    }
    o << "</text>\n";
    if (!row.top_features.empty()) {
      o << "<text class=\"features\" x=\"" << mx << "\" y=\"" << y + cell / 2 + 12 << "\" font-size=\"11\">";
      for (std::size_t i = 0; i < row.top_features.size(); ++i) {
        const auto& f = row.top_features[i];
        if (i) o << "<tspan fill=\"#333333\"> &gt; </tspan>";
        if (i == 0) {
          o << "<tspan class=\"top-feature\" fill=\"" << cfg.reject_color << "\" font-weight=\"bold\">";
        } else {
          o << "<tspan fill=\"#333333\">";
        }
        o << xml_escape(f.name) << " (" << fixed(f.importance, 2) << ")</tspan>";
      }
      o << "</text>\n";
    }
  }
  o << "</g>\n";

  const int fy = header + rows * cell;
  o << "<g class=\"footer\">\n";
  o << "<text class=\"prediction\" x=\"8\" y=\"" << fy + 22 << "\" font-size=\"13\" xml:space=\"preserve\">surrogate: "
    << xml_escape(class_label(layout, layout.footer.predicted_class));
  if (layout.footer.network_class) {
    o << "   network: " << xml_escape(class_label(layout, *layout.footer.network_class));
  }
  if (layout.footer.true_class) o << "   true: " << xml_escape(class_label(layout, *layout.footer.true_class));
  o << "</text>\n";
  if (const auto ok = layout.footer.correct()) {
    if (*ok) {
      o << "<text class=\"verdict correct\" x=\"8\" y=\"" << fy + 44
        << "\" font-size=\"13\" fill=\"#2ca02c\">\xE2\x9C\x93 correct</text>\n";
    } else {
      o << "<text class=\"verdict mismatch\" x=\"8\" y=\"" << fy + 44 << "\" font-size=\"13\" font-weight=\"bold\" fill=\""
        << cfg.reject_color << "\">\xE2\x9C\x97 mismatch: predicted class differs from the true class</text>\n";
    }
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::size_t display_width(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char ch : utf8) n += (ch & 0xC0) != 0x80;
  return n;
}

std::string render_text(const TreeViewLayout& layout) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head{"row", "test"};
  for (const auto& name : layout.class_names) head.push_back(name);
  head.push_back("top features");
  table.push_back(head);
  for (std::size_t t = 0; t < layout.rows.size(); ++t) {
    const auto& row = layout.rows[t];
    std::vector<std::string> line{std::to_string(t), row_test(row)};
    for (auto st : row.status) {
      line.push_back(st == CellStatus::Alive ? "\xC2\xB7" : st == CellStatus::RejectedHere ? "X" : "x");
    }
    std::string feats;
    for (std::size_t i = 0; i < row.top_features.size(); ++i) feats += (i ? ", " : "") + row.top_features[i].name;
    line.push_back(feats);
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));
  }
  std::string out;
  for (const auto& line : table) {
    std::string s;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) s += "  ";
      s += line[c];
      if (c + 1 < line.size()) s.append(width[c] - display_width(line[c]), ' ');
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out += s + '\n';
  }
  std::string foot = "predicted=" + class_label(layout, layout.footer.predicted_class);
  if (layout.footer.network_class) foot += " network=" + class_label(layout, *layout.footer.network_class);
  if (layout.footer.true_class) foot += " true=" + class_label(layout, *layout.footer.true_class);
  if (const auto ok = layout.footer.correct()) foot += *ok ? " correct" : " MISMATCH";
  out += foot + '\n';
  return out;
}

json layout_to_json(const TreeViewLayout& layout) {
  json j;
  j["sample_id"] = layout.sample_id;
  j["class_names"] = layout.class_names;
  j["meta_feature"] = layout.meta_feature;
  j["rows"] = json::array();
  for (const auto& r : layout.rows) {
    json jr;
    jr["node"] = r.node;
    jr["factor"] = r.factor;
    jr["value"] = r.value;
    jr["took_equal"] = r.took_equal;
    jr["status"] = json::array();
    for (auto s : r.status) jr["status"].push_back(status_name(s));
    jr["probability"] = r.probability;
    jr["top_features"] = json::array();
    for (const auto& f : r.top_features) {
      jr["top_features"].push_back({{"index", f.index}, {"name", f.name}, {"importance", f.importance}});
    }
    j["rows"].push_back(std::move(jr));
  }
  j["rejections"] = json::array();
  for (const auto& e : layout.rejections) {
    j["rejections"].push_back({{"class", e.class_id}, {"row", e.row}, {"factor", e.factor}});
  }
  json f;
  f["predicted_class"] = layout.footer.predicted_class;
  f["true_class"] = layout.footer.true_class ? json(*layout.footer.true_class) : json(nullptr);
  f["network_class"] = layout.footer.network_class ? json(*layout.footer.network_class) : json(nullptr);
  const auto ok = layout.footer.correct();
  f["correct"] = ok ? json(*ok) : json(nullptr);
  j["footer"] = std::move(f);
  return j;
}

TreeViewLayout layout_from_json(const json& j) {
  try {
    TreeViewLayout l;
    l.sample_id = j.at("sample_id").get<std::string>();
    l.class_names = j.at("class_names").get<std::vector<std::string>>();
    l.meta_feature = j.at("meta_feature").get<std::vector<int>>();
    for (const auto& jr : j.at("rows")) {
      LayoutRow r;
      r.node = jr.at("node").get<int>();
      r.factor = jr.at("factor").get<int>();
      r.value = jr.at("value").get<int>();
      r.took_equal = jr.at("took_equal").get<bool>();
      for (const auto& s : jr.at("status")) r.status.push_back(status_from_name(s.get<std::string>()));
      r.probability = jr.at("probability").get<std::vector<double>>();
      for (const auto& f : jr.at("top_features")) {
        r.top_features.push_back(
            {f.at("index").get<std::size_t>(), f.at("name").get<std::string>(), f.at("importance").get<double>()});
      }
      if (r.status.size() != l.class_names.size() || r.probability.size() != l.class_names.size()) {
        throw ValidationError("layout row width does not match class count");
      }
      l.rows.push_back(std::move(r));
    }
    for (const auto& e : j.at("rejections")) {
      l.rejections.push_back({e.at("class").get<int>(), e.at("row").get<std::size_t>(), e.at("factor").get<int>()});
    }
    const auto& f = j.at("footer");
    l.footer.predicted_class = f.at("predicted_class").get<int>();
    if (!f.at("true_class").is_null()) l.footer.true_class = f.at("true_class").get<int>();
    if (!f.at("network_class").is_null()) l.footer.network_class = f.at("network_class").get<int>();
    return l;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed layout document: ") + e.what());
  }
}

}  // namespace treeview
