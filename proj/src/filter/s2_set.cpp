#include "ps2f/filter/s2_set.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace ps2f {

namespace {

int nearest_index(const Vector& axis, double value) {
  Eigen::Index best = 0;
  (axis.array() - value).abs().minCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

int S2Grid::count(Membership m) const { return static_cast<int>(std::count(cells.begin(), cells.end(), m)); }

S2Grid sample_s2_set(const Ps2fConfig& cfg, const Vector& x, const NominalSolution& nominal, double a, int M,
                     int resolution, int threads) {
  if (cfg.m() != 2) throw std::invalid_argument("sample_s2_set: requires a two-input system");
  if (resolution < 2) throw std::invalid_argument("sample_s2_set: resolution must be >= 2");
  S2Grid grid;
  grid.resolution = resolution;
  grid.axis1 = Vector::LinSpaced(resolution, cfg.U.lower(0), cfg.U.upper(0));
  grid.axis2 = Vector::LinSpaced(resolution, cfg.U.lower(1), cfg.U.upper(1));
  grid.cells.assign(static_cast<std::size_t>(resolution) * resolution, Membership::kIndeterminate);

  auto work = [&](int row_begin, int row_stride) {
    for (int i = row_begin; i < resolution; i += row_stride) {
      for (int j = 0; j < resolution; ++j) {
        grid.cells[static_cast<std::size_t>(i) * resolution + j] =
            s2_membership(cfg, x, grid.node(i, j), nominal, a, M);
      }
    }
  };
  int count = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  count = std::min(count, resolution);
  if (count == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < count; ++t) pool.emplace_back(work, t, count);
    for (auto& th : pool) th.join();
  }

  grid.anchor_i = nearest_index(grid.axis1, nominal.v_star[0](0));
  grid.anchor_j = nearest_index(grid.axis2, nominal.v_star[0](1));
  auto& anchor = grid.cells[static_cast<std::size_t>(grid.anchor_i) * resolution + grid.anchor_j];
  grid.anchor_verdict = anchor;
  anchor = Membership::kTrue;
  return grid;
}

std::vector<Polyline> s2_boundary(const S2Grid& grid) {
  const int R = grid.resolution;
  // Padded field: index p = i + 1, q = j + 1; the border is false.
  const int W = R + 2;
  std::vector<char> b(static_cast<std::size_t>(W) * W, 0);
  auto at = [&](int p, int q) -> char& { return b[static_cast<std::size_t>(p) * W + q]; };
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < R; ++j) at(i + 1, j + 1) = grid.member(i, j) ? 1 : 0;
  }

  std::vector<Polyline> lines;
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < R; ++j) {
      if (!at(i + 1, j + 1)) continue;
      bool isolated = true;
      for (int dp = -1; dp <= 1 && isolated; ++dp) {
        for (int dq = -1; dq <= 1; ++dq) {
          if ((dp != 0 || dq != 0) && at(i + 1 + dp, j + 1 + dq)) isolated = false;
        }
      }
      if (isolated) {
        lines.push_back({grid.node(i, j)});
        at(i + 1, j + 1) = 0;
      }
    }
  }

  const double d1 = grid.axis1(1) - grid.axis1(0);
  const double d2 = grid.axis2(1) - grid.axis2(0);
  auto coord = [&](double p, double q) {
    const double u1 = grid.axis1(0) + (p - 1.0) * d1;
    const double u2 = grid.axis2(0) + (q - 1.0) * d2;
    return Eigen::Vector2d(std::clamp(u1, grid.axis1(0), grid.axis1(R - 1)),
                           std::clamp(u2, grid.axis2(0), grid.axis2(R - 1)));
  };
  // Edge keys: 2·(p·W + q) for the edge (p,q)–(p+1,q), +1 for (p,q)–(p,q+1).
  auto point_of = [&](long key) {
    const long node = key / 2;
    const double p = static_cast<double>(node / W);
    const double q = static_cast<double>(node % W);
    return key % 2 == 0 ? coord(p + 0.5, q) : coord(p, q + 0.5);
  };

  std::unordered_map<long, std::vector<std::size_t>> incident;
  std::vector<std::array<long, 2>> segments;
  for (int p = 0; p + 1 < W; ++p) {
    for (int q = 0; q + 1 < W; ++q) {
      const long bottom = 2L * (p * W + q);
      const long left = 2L * (p * W + q) + 1;
      const long top = 2L * (p * W + q + 1);
      const long right = 2L * ((p + 1) * W + q) + 1;
      const int c = at(p, q) | (at(p + 1, q) << 1) | (at(p + 1, q + 1) << 2) | (at(p, q + 1) << 3);
      auto add = [&](long e0, long e1) {
        incident[e0].push_back(segments.size());
        incident[e1].push_back(segments.size());
        segments.push_back({e0, e1});
      };
      switch (c) {
        case 1: case 14: add(left, bottom); break;
        case 2: case 13: add(bottom, right); break;
        case 3: case 12: add(left, right); break;
        case 4: case 11: add(right, top); break;
        case 6: case 9: add(bottom, top); break;
        case 7: case 8: add(left, top); break;
        case 5: add(left, bottom); add(right, top); break;
        case 10: add(bottom, right); add(left, top); break;
        default: break;
      }
    }
  }

  std::vector<char> used(segments.size(), 0);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    used[s] = 1;
    const long start = segments[s][0];
    long current = segments[s][1];
    Polyline line{point_of(start), point_of(current)};
    while (current != start) {
      std::size_t next = segments.size();
      for (std::size_t cand : incident[current]) {
        if (!used[cand]) {
          next = cand;
          break;
        }
      }
      if (next == segments.size()) break;
      used[next] = 1;
      current = segments[next][0] == current ? segments[next][1] : segments[next][0];
      line.push_back(point_of(current));
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

Polyline downsample(const Polyline& line, std::size_t max_vertices) {
  if (line.size() <= max_vertices || max_vertices < 2) return line;
  Polyline out;
  out.reserve(max_vertices);
  const double step = static_cast<double>(line.size() - 1) / static_cast<double>(max_vertices - 1);
  for (std::size_t k = 0; k < max_vertices; ++k) {
    out.push_back(line[static_cast<std::size_t>(std::llround(k * step))]);
  }
  return out;
}

void write_grid_csv(std::ostream& out, const S2Grid& grid) {
  for (int i = 0; i < grid.resolution; ++i) {
    for (int j = 0; j < grid.resolution; ++j) {
      if (j > 0) out << ',';
      switch (grid.at(i, j)) {
        case Membership::kTrue: out << 1; break;
        case Membership::kFalse: out << 0; break;
        case Membership::kIndeterminate: out << -1; break;
      }
    }
    out << '\n';
  }
}

nlohmann::json polylines_to_json(const std::vector<Polyline>& lines) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& line : lines) {
    nlohmann::json l = nlohmann::json::array();
    for (const auto& v : line) l.push_back({v(0), v(1)});
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace ps2f
