#include "treeview/activations.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace treeview {

std::string NeuronId::str() const {
  return std::to_string(layer) + ":" + std::to_string(unit);
}

NeuronId NeuronId::parse(const std::string& text) {
  const auto colon = text.find(':');
  NeuronId id;
  auto parse_part = [&](std::string_view part, std::size_t& out) {
    part = trim(part);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && ptr == part.data() + part.size() && !part.empty();
  };
  const std::string_view sv(text);
  if (colon == std::string::npos || !parse_part(sv.substr(0, colon), id.layer) ||
      !parse_part(sv.substr(colon + 1), id.unit)) {
    throw ValidationError("malformed neuron id '" + text + "' (expected layer:unit)");
  }
  return id;
}

void ActivationMatrix::validate() const {
  if (neuron_ids.size() != num_neurons()) {
    throw ValidationError("activation matrix has " + std::to_string(num_neurons()) + " rows but " +
                          std::to_string(neuron_ids.size()) + " neuron ids");
  }
  if (sample_ids.size() != num_samples()) {
    throw ValidationError("activation matrix has " + std::to_string(num_samples()) +
                          " columns but " + std::to_string(sample_ids.size()) + " sample ids");
  }
}

void export_activations(const ActivationMatrix& am, const std::filesystem::path& path) {
  am.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write activation file: " + path.string());
  out << "treeview-activations v1 N=" << am.num_neurons() << " T=" << am.num_samples() << '\n';
  for (std::size_t i = 0; i < am.neuron_ids.size(); ++i) {
    out << (i ? "," : "") << am.neuron_ids[i].str();
  }
  out << '\n';
  for (std::size_t j = 0; j < am.sample_ids.size(); ++j) {
    out << (j ? "," : "") << am.sample_ids[j];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < am.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < am.values.cols(); ++c) {
      out << (c ? "," : "") << format_double(am.values(r, c));
    }
    out << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing activation file: " + path.string());
}

ActivationMatrix import_activations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open activation file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("activation file is empty: " + path.string());

  std::size_t n = 0, t = 0;
  {
    std::istringstream hs{std::string(trim(line))};
    std::string magic, version, nf, tf;
    hs >> magic >> version >> nf >> tf;
    std::string rest;
    if (magic != "treeview-activations" || version != "v1" || nf.rfind("N=", 0) != 0 ||
        tf.rfind("T=", 0) != 0 || (hs >> rest)) {
      throw ValidationError("malformed activation header: '" + line + "'");
    }
    auto num = [&](const std::string& s) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError("malformed activation header: '" + line + "'");
      }
      return v;
    };
    n = num(nf);
    t = num(tf);
  }

  ActivationMatrix am;
  if (!std::getline(in, line)) throw ValidationError("activation file missing neuron id line");
  if (n > 0) {
    for (const auto& tok : split_line(trim(line), ',')) am.neuron_ids.push_back(NeuronId::parse(tok));
  }
  if (am.neuron_ids.size() != n) {
    throw ValidationError("activation header declares N=" + std::to_string(n) + " but " +
                          std::to_string(am.neuron_ids.size()) + " neuron ids were listed");
  }
  if (!std::getline(in, line)) throw ValidationError("activation file missing sample id line");
  if (t > 0) {
    for (const auto& tok : split_line(trim(line), ',')) am.sample_ids.emplace_back(trim(tok));
  }
  if (am.sample_ids.size() != t) {
    throw ValidationError("activation header declares T=" + std::to_string(t) + " but " +
                          std::to_string(am.sample_ids.size()) + " sample ids were listed");
  }

  am.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (rows == n) {
      throw ValidationError("activation file has more than the expected " + std::to_string(n) +
                            " rows");
    }
    const auto cells = split_line(trim(line), ',');
    if (cells.size() != t) {
      throw ValidationError("activation row " + std::to_string(rows) + ": expected " +
                            std::to_string(t) + " values, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < t; ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw ValidationError("activation row " + std::to_string(rows) + ", column " +
                              std::to_string(c) + ": non-numeric value '" + cells[c] + "'");
      }
      am.values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c)) = v;
    }
    ++rows;
  }
  if (rows != n) {
    throw ValidationError("activation file truncated: expected " + std::to_string(n) +
                          " rows, found " + std::to_string(rows));
  }
  return am;
}

}  // namespace treeview
