#include "fpcov/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpcov/errors.hpp"

namespace fpcov {
namespace io {

namespace {

double parse_double(const std::string& token, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size()) {
      throw ParseError("malformed number '" + token + "' in " + where);
    }
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    throw ParseError("malformed number '" + token + "' in " + where);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string dataset_fingerprint(const std::vector<ObservedCurve>& data) {
  std::string bytes;
  for (const ObservedCurve& c : data) {
    bytes += c.id;
    bytes += '\n';
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      bytes += fmt17(c.times[j]);
      bytes += ',';
      bytes += fmt17(c.values[j]);
      bytes += ';';
    }
  }
  return hex64(fnv1a64(bytes));
}

std::vector<ObservedCurve> read_long_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw NoData("'" + path + "' is empty");
  {
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "curve_id" || header[1] != "t" ||
        header[2] != "y") {
      throw ParseError("'" + path + "': expected header curve_id,t,y");
    }
  }

  std::vector<ObservedCurve> curves;
  std::size_t slot_of_last = 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 3) {
      throw ParseError("'" + path + "' line " + std::to_string(row) +
                       ": expected 3 fields");
    }
    const std::string where = path + " line " + std::to_string(row);
    const double t = parse_double(f[1], where);
    const double y = parse_double(f[2], where);

    // Rows for one curve are almost always contiguous; remember the last
    // slot and fall back to a scan when ids interleave.
    if (curves.empty() || curves[slot_of_last].id != f[0]) {
      std::size_t found = curves.size();
      for (std::size_t k = 0; k < curves.size(); ++k) {
        if (curves[k].id == f[0]) {
          found = k;
          break;
        }
      }
      if (found == curves.size()) {
        curves.push_back(ObservedCurve{f[0], {}, {}});
      }
      slot_of_last = found;
    }
    curves[slot_of_last].times.push_back(t);
    curves[slot_of_last].values.push_back(y);
  }
  if (curves.empty()) throw NoData("'" + path + "' has no observation rows");
  for (const ObservedCurve& c : curves) c.validate();
  return curves;
}

void write_long_csv(const std::string& path,
                    const std::vector<ObservedCurve>& data) {
  std::ofstream out = open_out(path);
  out << "curve_id,t,y\n";
  for (const ObservedCurve& c : data) {
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      out << c.id << ',' << fmt17(c.times[j]) << ',' << fmt17(c.values[j])
          << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_surface_csv(const std::string& path,
                       const CovarianceSurface& surface) {
  std::ofstream out = open_out(path);
  const int L = surface.grid.size;
  for (int l = 0; l < L; ++l) {
    out << (l ? "," : "") << fmt17(surface.grid.points[l]);
  }
  out << '\n';
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      out << (b ? "," : "") << fmt17(surface.at(a, b));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void read_surface_csv(const std::string& path, std::vector<double>* points,
                      std::vector<double>* values) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw NoData("'" + path + "' is empty");
  points->clear();
  for (const std::string& tok : split_csv_line(line)) {
    points->push_back(parse_double(tok, path + " header"));
  }
  const std::size_t L = points->size();
  values->clear();
  values->reserve(L * L);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != L) {
      throw ParseError("'" + path + "' line " + std::to_string(row) +
                       ": expected " + std::to_string(L) + " values");
    }
    for (const std::string& tok : f) {
      values->push_back(parse_double(tok, path + " line " + std::to_string(row)));
    }
  }
  if (values->size() != L * L) {
    throw ParseError("'" + path + "': expected " + std::to_string(L) +
                     " rows of values");
  }
}

void write_eigen_csv(const std::string& path, const EigenSystem& eig) {
  std::ofstream out = open_out(path);
  out << "s";
  for (int k = 0; k < eig.rank; ++k) out << ",psi" << (k + 1);
  out << '\n';
  for (int l = eig.grid.unit_first; l <= eig.grid.unit_last; ++l) {
    out << fmt17(eig.grid.points[l]);
    for (int k = 0; k < eig.rank; ++k) out << ',' << fmt17(eig.functions[k][l]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_eigenvalues_csv(const std::string& path, const EigenSystem& eig) {
  std::ofstream out = open_out(path);
  for (int k = 0; k < eig.rank; ++k) {
    out << (k ? "," : "") << "lambda" << (k + 1);
  }
  out << '\n';
  for (int k = 0; k < eig.rank; ++k) {
    out << (k ? "," : "") << fmt17(eig.values[k]);
  }
  out << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_sigma2_json(const std::string& path, const SigmaEstimate& est) {
  nlohmann::json j;
  j["sigma2"] = est.value;
  j["floored"] = est.floored();
  j["band"] = {{"a1", est.band.a1},
               {"a2", est.band.a2},
               {"t0", est.band.t0},
               {"t1", est.band.t1},
               {"nodes", est.band.nodes},
               {"adapted", est.band.adapted},
               {"note", est.band.note}};
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_cv_table(const std::string& path, const SelectionResult& sel) {
  std::ofstream out = open_out(path);
  out << "K,h,approx_score,exact_score,selected\n";
  for (const SelectionRow& row : sel.rows) {
    out << row.K << ',' << fmt17(row.h) << ','
        << (row.failed ? "" : fmt17(row.approx_score)) << ','
        << (row.exact_score ? fmt17(*row.exact_score) : "") << ','
        << (row.selected ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_json, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::string>& warnings) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = nlohmann::json::parse(config_json);
  j["config_hash"] = hex64(fnv1a64(config_json));
  j["seed"] = seed;
  j["outputs"] = outputs;
  j["warnings"] = warnings;
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace io
}  // namespace fpcov
