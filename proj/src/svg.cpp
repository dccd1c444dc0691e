#include "contractgen/svg.hpp"

#include "contractgen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace contractgen::svg {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string px(double v) {
  if (std::abs(v) < 0.005) v = 0.0;  // avoid the "-0.00" spelling
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Maps a data domain onto a pixel box; py0 is the top edge.
struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px0 = 0, px1 = 1, py0 = 0, py1 = 1;

  double xpix(double x) const {
    return x1 == x0 ? 0.5 * (px0 + px1) : px0 + (x - x0) / (x1 - x0) * (px1 - px0);
  }
  double ypix(double y) const {
    return y1 == y0 ? 0.5 * (py0 + py1) : py1 - (y - y0) / (y1 - y0) * (py1 - py0);
  }
};

/// Round tick positions covering [lo, hi] at a 1/2/5 step.
std::vector<double> nice_ticks(double lo, double hi, int target) {
  std::vector<double> out;
  if (!(hi > lo)) {
    out.push_back(lo);
    return out;
  }
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = mag * (norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0);
  double t = std::ceil(lo / step) * step;
  const double eps = step * 1e-9;
  while (t <= hi + eps) {
    out.push_back(std::abs(t) < eps ? 0.0 : t);
    t += step;
  }
  return out;
}

void open_svg(std::ostringstream& os, int w, int h) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n"
     << "<g font-family=\"Helvetica,Arial,sans-serif\" font-size=\"12\" fill=\"#222222\">\n";
}

void close_svg(std::ostringstream& os) { os << "</g>\n</svg>\n"; }

/// Plot border, horizontal gridlines with y tick labels, optional x ticks,
/// and the axis titles.
void draw_axes(std::ostringstream& os, const Frame& f, const std::string& xlabel,
               const std::string& ylabel, bool x_ticks) {
  for (double t : nice_ticks(f.y0, f.y1, 5)) {
    const double y = f.ypix(t);
    os << "<line x1=\"" << px(f.px0) << "\" y1=\"" << px(y) << "\" x2=\"" << px(f.px1)
       << "\" y2=\"" << px(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << px(f.px0 - 8) << "\" y=\"" << px(y + 4)
       << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
  }
  if (x_ticks) {
    for (double t : nice_ticks(f.x0, f.x1, 6)) {
      const double x = f.xpix(t);
      os << "<line x1=\"" << px(x) << "\" y1=\"" << px(f.py1) << "\" x2=\"" << px(x)
         << "\" y2=\"" << px(f.py1 + 5) << "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
      os << "<text x=\"" << px(x) << "\" y=\"" << px(f.py1 + 20)
         << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
    }
  }
  os << "<rect x=\"" << px(f.px0) << "\" y=\"" << px(f.py0) << "\" width=\""
     << px(f.px1 - f.px0) << "\" height=\"" << px(f.py1 - f.py0)
     << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  if (!xlabel.empty())
    os << "<text x=\"" << px(0.5 * (f.px0 + f.px1)) << "\" y=\"" << px(f.py1 + 38)
       << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  if (!ylabel.empty())
    os << "<text x=\"" << px(f.px0 - 52) << "\" y=\"" << px(0.5 * (f.py0 + f.py1))
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << px(f.px0 - 52) << " "
       << px(0.5 * (f.py0 + f.py1)) << ")\">" << ylabel << "</text>\n";
}

struct SeedSpread {
  double lo = 0, hi = 0, sum = 0;
  int n = 0;
};

}  // namespace

std::string render_curves(const std::vector<csvio::CurvePoint>& rows) {
  // algo -> step -> spread over seeds
  std::map<std::string, std::map<long long, SeedSpread>> series;
  for (const auto& r : rows) {
    auto& s = series[r.algo][r.step];
    if (s.n == 0) {
      s.lo = s.hi = r.eval_reward;
    } else {
      s.lo = std::min(s.lo, r.eval_reward);
      s.hi = std::max(s.hi, r.eval_reward);
    }
    s.sum += r.eval_reward;
    ++s.n;
  }

  Frame f;
  f.px0 = 80;
  f.px1 = 852;
  f.py0 = 24;
  f.py1 = 444;
  if (!rows.empty()) {
    bool first = true;
    for (const auto& [algo, steps] : series) {
      for (const auto& [step, s] : steps) {
        const double sd = static_cast<double>(step);
        if (first) {
          f.x0 = f.x1 = sd;
          f.y0 = s.lo;
          f.y1 = s.hi;
          first = false;
        } else {
          f.x0 = std::min(f.x0, sd);
          f.x1 = std::max(f.x1, sd);
          f.y0 = std::min(f.y0, s.lo);
          f.y1 = std::max(f.y1, s.hi);
        }
      }
    }
    const double pad = f.y1 > f.y0 ? 0.05 * (f.y1 - f.y0) : std::max(1.0, std::abs(f.y0)) * 0.1;
    f.y0 -= pad;
    f.y1 += pad;
    if (f.x1 == f.x0) f.x1 = f.x0 + 1;
  }

  std::ostringstream os;
  open_svg(os, 880, 500);
  draw_axes(os, f, "environment step", "evaluation reward", true);

  int idx = 0;
  for (const auto& [algo, steps] : series) {
    const char* color = kPalette[idx % kPaletteSize];
    // seed band: max forward, min backward
    if (steps.size() > 1) {
      std::ostringstream band;
      for (auto it = steps.begin(); it != steps.end(); ++it)
        band << px(f.xpix(static_cast<double>(it->first))) << ","
             << px(f.ypix(it->second.hi)) << " ";
      for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        band << px(f.xpix(static_cast<double>(it->first))) << ","
             << px(f.ypix(it->second.lo)) << " ";
      os << "<polygon points=\"" << band.str() << "\" fill=\"" << color
         << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    if (steps.size() > 1) {
      std::ostringstream line;
      for (const auto& [step, s] : steps)
        line << px(f.xpix(static_cast<double>(step))) << "," << px(f.ypix(s.sum / s.n))
             << " ";
      os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"1.8\"/>\n";
    } else {
      for (const auto& [step, s] : steps)
        os << "<circle cx=\"" << px(f.xpix(static_cast<double>(step))) << "\" cy=\""
           << px(f.ypix(s.sum / s.n)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    // legend entry
    const double ly = f.py0 + 16 + 20 * idx;
    os << "<line x1=\"" << px(f.px1 - 150) << "\" y1=\"" << px(ly) << "\" x2=\""
       << px(f.px1 - 122) << "\" y2=\"" << px(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2.5\"/>\n";
    os << "<text x=\"" << px(f.px1 - 114) << "\" y=\"" << px(ly + 4) << "\">" << algo
       << "</text>\n";
    ++idx;
  }
  close_svg(os);
  return os.str();
}

std::string render_contracts(const std::vector<csvio::ContractRow>& rows) {
  constexpr int kMaxStates = 12;
  std::set<int> ids;
  for (const auto& r : rows) ids.insert(r.state_id);
  std::vector<int> shown(ids.begin(), ids.end());
  if (static_cast<int>(shown.size()) > kMaxStates) shown.resize(kMaxStates);

  // state id -> rows sorted by type
  std::map<int, std::vector<csvio::ContractRow>> by_state;
  for (const auto& r : rows)
    if (std::binary_search(shown.begin(), shown.end(), r.state_id))
      by_state[r.state_id].push_back(r);
  int max_types = 0;
  double lat_hi = 0, rew_hi = 0;
  for (auto& [id, list] : by_state) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.type < b.type; });
    max_types = std::max(max_types, static_cast<int>(list.size()));
    for (const auto& r : list) {
      lat_hi = std::max({lat_hi, r.latency, r.oracle_latency, r.max_latency});
      rew_hi = std::max({rew_hi, r.reward, r.oracle_reward});
    }
  }
  if (lat_hi <= 0) lat_hi = 1;
  if (rew_hi <= 0) rew_hi = 1;

  const int groups = std::max(1, static_cast<int>(shown.size()));
  Frame lat, rew;
  lat.px0 = rew.px0 = 80;
  lat.px1 = rew.px1 = 852;
  lat.py0 = 28;
  lat.py1 = 282;
  rew.py0 = 352;
  rew.py1 = 606;
  lat.x0 = rew.x0 = 0;
  lat.x1 = rew.x1 = groups;
  lat.y0 = rew.y0 = 0;
  lat.y1 = lat_hi * 1.05;
  rew.y1 = rew_hi * 1.05;

  std::ostringstream os;
  open_svg(os, 880, 660);
  draw_axes(os, lat, "", "latency allowance (s)", false);
  draw_axes(os, rew, "market state", "reward", false);

  const double group_w = (lat.px1 - lat.px0) / groups;
  const int slots = std::max(1, 2 * max_types);
  const double bar_w = group_w * 0.8 / slots;

  auto draw_panel = [&](const Frame& f, bool latency_panel) {
    for (size_t g = 0; g < shown.size(); ++g) {
      const auto& list = by_state[shown[g]];
      const double left = f.px0 + group_w * g + group_w * 0.1;
      for (size_t k = 0; k < list.size(); ++k) {
        const auto& r = list[k];
        const char* color = kPalette[(r.type - 1) % kPaletteSize];
        const double policy_v = latency_panel ? r.latency : r.reward;
        const double oracle_v = latency_panel ? r.oracle_latency : r.oracle_reward;
        const double x_policy = left + bar_w * (2 * k);
        const double x_oracle = x_policy + bar_w;
        const double base = f.ypix(0);
        os << "<rect x=\"" << px(x_policy) << "\" y=\"" << px(f.ypix(policy_v))
           << "\" width=\"" << px(bar_w * 0.92) << "\" height=\""
           << px(base - f.ypix(policy_v)) << "\" fill=\"" << color << "\"/>\n";
        os << "<rect x=\"" << px(x_oracle) << "\" y=\"" << px(f.ypix(oracle_v))
           << "\" width=\"" << px(bar_w * 0.92) << "\" height=\""
           << px(base - f.ypix(oracle_v)) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.38\"/>\n";
      }
      if (latency_panel && !list.empty()) {
        // the state's latency budget
        const double y = f.ypix(list.front().max_latency);
        os << "<line x1=\"" << px(left) << "\" y1=\"" << px(y) << "\" x2=\""
           << px(left + group_w * 0.8) << "\" y2=\"" << px(y)
           << "\" stroke=\"#222222\" stroke-width=\"1\" stroke-dasharray=\"4,3\"/>\n";
      }
      if (!latency_panel)
        os << "<text x=\"" << px(f.px0 + group_w * (g + 0.5)) << "\" y=\""
           << px(f.py1 + 18) << "\" text-anchor=\"middle\">s" << shown[g] << "</text>\n";
    }
  };
  draw_panel(lat, true);
  draw_panel(rew, false);

  for (int q = 0; q < max_types; ++q) {
    const double lx = lat.px0 + 10 + 110 * q;
    os << "<rect x=\"" << px(lx) << "\" y=\"10\" width=\"12\" height=\"12\" fill=\""
       << kPalette[q % kPaletteSize] << "\"/>\n";
    os << "<text x=\"" << px(lx + 17) << "\" y=\"20\">type " << q + 1 << "</text>\n";
  }
  os << "<text x=\"" << px(lat.px1 - 280)
     << "\" y=\"20\">solid = policy, faint = oracle, dashed = budget</text>\n";
  close_svg(os);
  return os.str();
}

void write_svg(const std::string& path, const std::string& content) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write " + path);
  if (std::fwrite(content.data(), 1, content.size(), f) != content.size()) {
    std::fclose(f);
    throw DataError("failed writing " + path);
  }
  if (std::fclose(f) != 0) throw DataError("failed writing " + path);
}

}  // namespace contractgen::svg
