#include "contractgen/csv.hpp"

#include "contractgen/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace contractgen::csvio {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& path, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    std::ostringstream os;
    os << path << ":" << line_no << ": not a number: '" << field << "'";
    throw DataError(os.str());
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_curves(const std::string& path, const std::vector<CurvePoint>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write " + path);
  std::fprintf(f, "%s\n", kCurveHeader);
  for (const CurvePoint& r : rows) {
    std::fprintf(f, "%lld,%llu,%s,%s,%s,%s,%s,%s\n", r.step,
                 static_cast<unsigned long long>(r.seed), r.algo.c_str(),
                 r.train_reward ? fmt(*r.train_reward).c_str() : "",
                 fmt(r.eval_reward).c_str(), fmt(r.eval_feasibility).c_str(),
                 fmt(r.eval_client_utility).c_str(), fmt(r.eval_oracle_ratio).c_str());
  }
  if (std::fclose(f) != 0) throw DataError("failed writing " + path);
}

std::vector<CurvePoint> read_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader)
    throw DataError(path + ":1: expected curve header '" + kCurveHeader + "'");
  std::vector<CurvePoint> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 8) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected 8 fields, got " << fields.size();
      throw DataError(os.str());
    }
    CurvePoint r;
    r.step = static_cast<long long>(parse_double(fields[0], path, line_no));
    r.seed = static_cast<uint64_t>(parse_double(fields[1], path, line_no));
    r.algo = fields[2];
    if (!fields[3].empty()) r.train_reward = parse_double(fields[3], path, line_no);
    r.eval_reward = parse_double(fields[4], path, line_no);
    r.eval_feasibility = parse_double(fields[5], path, line_no);
    r.eval_client_utility = parse_double(fields[6], path, line_no);
    r.eval_oracle_ratio = parse_double(fields[7], path, line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_contracts(const std::string& path, const std::vector<ContractRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write " + path);
  std::fprintf(f, "%s\n", kContractHeader);
  for (const ContractRow& r : rows) {
    std::fprintf(f, "%d,%d,%s,%s,%s,%d,%s,%s,%s,%s,%s,%s\n", r.state_id,
                 r.provider_count, fmt(r.max_latency).c_str(), fmt(r.proportion).c_str(),
                 fmt(r.complexity).c_str(), r.type, fmt(r.latency).c_str(),
                 fmt(r.reward).c_str(), fmt(r.asp_utility).c_str(),
                 fmt(r.client_contribution).c_str(), fmt(r.oracle_latency).c_str(),
                 fmt(r.oracle_reward).c_str());
  }
  if (std::fclose(f) != 0) throw DataError("failed writing " + path);
}

std::vector<ContractRow> read_contracts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kContractHeader)
    throw DataError(path + ":1: expected contract header '" + std::string(kContractHeader) +
                    "'");
  std::vector<ContractRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 12) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected 12 fields, got " << fields.size();
      throw DataError(os.str());
    }
    ContractRow r;
    r.state_id = static_cast<int>(parse_double(fields[0], path, line_no));
    r.provider_count = static_cast<int>(parse_double(fields[1], path, line_no));
    r.max_latency = parse_double(fields[2], path, line_no);
    r.proportion = parse_double(fields[3], path, line_no);
    r.complexity = parse_double(fields[4], path, line_no);
    r.type = static_cast<int>(parse_double(fields[5], path, line_no));
    r.latency = parse_double(fields[6], path, line_no);
    r.reward = parse_double(fields[7], path, line_no);
    r.asp_utility = parse_double(fields[8], path, line_no);
    r.client_contribution = parse_double(fields[9], path, line_no);
    r.oracle_latency = parse_double(fields[10], path, line_no);
    r.oracle_reward = parse_double(fields[11], path, line_no);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace contractgen::csvio
