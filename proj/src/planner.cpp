#include "ixda/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ixda {

namespace {

constexpr double kTrailMeters = 12.0;
constexpr double kExtendMeters = 24.0;

// Distance covered by the plan's own tick-stepped service brake from v; the
// last partial step adds at most v*dt/2 over the continuous figure.
double brake_extent(double v, double decel) { return stopping_distance(v, decel) + v * kTickSeconds / 2.0; }

std::vector<EdgeId> extend_forward(const LaneGraph& g, NodeId node, double meters) {
  std::vector<EdgeId> out;
  double covered = 0.0;
  NodeId cur = node;
  while (covered < meters) {
    const auto& outs = g.out_edges(cur);
    if (outs.empty() || out.size() > g.edges().size()) {
      break;
    }
    const EdgeId e = *std::min_element(outs.begin(), outs.end());
    out.push_back(e);
    covered += g.edge(e).length;
    cur = g.edge(e).to;
  }
  return out;
}

Route assemble(const LaneGraph& g, std::vector<EdgeId> edges, std::optional<std::size_t> goal_after, int version) {
  Route r;
  r.edges = std::move(edges);
  r.version = version;
  double s = 0.0;
  for (std::size_t i = 0; i < r.edges.size(); ++i) {
    const auto& e = g.edge(r.edges[i]);
    r.start.push_back(s);
    if (g.is_junction(e.from)) {
      r.junctions.emplace_back(e.from, s);
    }
    if (goal_after && *goal_after == i) {
      r.goal_s = s;
    }
    s += e.length;
  }
  r.length = s;
  if (!r.edges.empty() && g.is_junction(g.edge(r.edges.back()).to)) {
    r.junctions.emplace_back(g.edge(r.edges.back()).to, s);
  }
  if (goal_after && *goal_after >= r.edges.size()) {
    r.goal_s = s;
  }
  return r;
}

// Goal sits at the start of edge index `trail + path` in the assembled list.
Route compose(const LaneGraph& g, std::vector<EdgeId> head, const std::vector<EdgeId>& path, NodeId goal,
              int version) {
  const std::size_t goal_index = head.size() + path.size();
  head.insert(head.end(), path.begin(), path.end());
  const auto ext = extend_forward(g, goal, kExtendMeters);
  head.insert(head.end(), ext.begin(), ext.end());
  return assemble(g, std::move(head), goal_index, version);
}

}  // namespace

std::size_t Route::edge_index(double s) const {
  if (start.empty()) {
    return 0;
  }
  const auto it = std::upper_bound(start.begin(), start.end(), s);
  if (it == start.begin()) {
    return 0;
  }
  return static_cast<std::size_t>(it - start.begin()) - 1;
}

Pose Route::pose_at(const LaneGraph& g, double s) const {
  const std::size_t i = edge_index(s);
  const auto& e = g.edge(edges.at(i));
  const Vec2 a = g.node(e.from).position;
  const Vec2 b = g.node(e.to).position;
  // Past either end the edge line is extrapolated.
  const double t = (s - start[i]) / e.length;
  const Vec2 q = a + (b - a) * t;
  return {q.x, q.y, normalize_angle(std::atan2(b.y - a.y, b.x - a.x))};
}

double Route::project(const LaneGraph& g, Vec2 p, double lo, double hi) const {
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = std::clamp(lo, 0.0, length);
  for (std::size_t i = edge_index(lo); i < edges.size() && start[i] <= hi; ++i) {
    const auto& e = g.edge(edges[i]);
    const Vec2 a = g.node(e.from).position;
    const Vec2 ab = g.node(e.to).position - a;
    const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
    const double d = distance(p, a + ab * t);
    if (d < best_d - 1e-9) {
      best_d = d;
      best_s = start[i] + t * e.length;
    }
  }
  return best_s;
}

double Route::project(const LaneGraph& g, Vec2 p) const {
  return project(g, p, 0.0, length);
}

Route route_between(const DepotMap& map, NodeId from, NodeId to, int version) {
  const auto& g = map.lanes;
  const auto path = g.shortest_path(from, to);
  if (!path) {
    throw NoRoute("no lane path from node " + std::to_string(from) + " to node " + std::to_string(to));
  }
  return compose(g, g.trailing_edges(from, kTrailMeters), *path, to, version);
}

Route route_from_edge(const DepotMap& map, EdgeId edge, NodeId to, int version) {
  const auto& g = map.lanes;
  const auto& e = g.edge(edge);
  const auto path = g.shortest_path(e.to, to);
  if (!path) {
    throw NoRoute("no lane path from edge " + std::to_string(edge) + " to node " + std::to_string(to));
  }
  auto head = g.trailing_edges(e.from, kTrailMeters);
  head.push_back(edge);
  return compose(g, std::move(head), *path, to, version);
}

Route route_hold(const DepotMap& map, NodeId node, int version) {
  return compose(map.lanes, map.lanes.trailing_edges(node, kTrailMeters), {}, node, version);
}

EdgeId locate_edge(const LaneGraph& g, const Pose& pose) {
  const Vec2 p = pose.position();
  const Vec2 dir{std::cos(pose.heading), std::sin(pose.heading)};
  EdgeId best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& e : g.edges()) {
    const Vec2 a = g.node(e.from).position;
    const Vec2 b = g.node(e.to).position;
    double cost = point_segment_distance(p, a, b);
    // Opposing lanes are a last resort.
    if (dot(b - a, dir) < 0.5 * e.length) {
      cost += 100.0;
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = e.id;
    }
  }
  if (best < 0) {
    throw NoRoute("map has no lane edges");
  }
  return best;
}

bool ReservationTable::reserve(int resource, Tick tick, VehicleId v) {
  const auto [it, inserted] = cells_.try_emplace({resource, tick}, v);
  if (!inserted && it->second != v) {
    ++contested_;
    return false;
  }
  return true;
}

std::optional<VehicleId> ReservationTable::owner(int resource, Tick tick) const {
  const auto it = cells_.find({resource, tick});
  if (it == cells_.end()) {
    return std::nullopt;
  }
  return it->second;
}

Planner::Planner(const DepotMap& map, PlannerConfig cfg) : map_(&map), cfg_(cfg) {
  const auto& g = map.lanes;
  for (const auto& e : g.edges()) {
    const int n = std::max(1, static_cast<int>(std::ceil(e.length / cfg_.segment_length - 1e-9)));
    first_segment_.push_back(segment_count_);
    segments_of_.push_back(n);
    segment_len_.push_back(e.length / n);
    segment_count_ += n;
  }
  for (const auto& n : g.nodes()) {
    if (g.is_junction(n.id)) {
      const int idx = static_cast<int>(junction_of_.size());
      junction_of_[n.id] = segment_count_ + idx;
    }
  }
  double x1 = -std::numeric_limits<double>::infinity(), y1 = x1;
  grid_x0_ = grid_y0_ = std::numeric_limits<double>::infinity();
  for (const auto& n : g.nodes()) {
    grid_x0_ = std::min(grid_x0_, n.position.x);
    grid_y0_ = std::min(grid_y0_, n.position.y);
    x1 = std::max(x1, n.position.x);
    y1 = std::max(y1, n.position.y);
  }
  if (g.nodes().empty()) {
    grid_x0_ = grid_y0_ = x1 = y1 = 0.0;
  }
  grid_w_ = static_cast<int>(std::floor((x1 - grid_x0_) / cell_)) + 1;
  grid_h_ = static_cast<int>(std::floor((y1 - grid_y0_) / cell_)) + 1;
  grid_.assign(static_cast<std::size_t>(grid_w_ * grid_h_), {});
  for (const auto& e : g.edges()) {
    const Vec2 a = g.node(e.from).position;
    const Vec2 b = g.node(e.to).position;
    const int cx0 = static_cast<int>(std::floor((std::min(a.x, b.x) - grid_x0_) / cell_));
    const int cx1 = static_cast<int>(std::floor((std::max(a.x, b.x) - grid_x0_) / cell_));
    const int cy0 = static_cast<int>(std::floor((std::min(a.y, b.y) - grid_y0_) / cell_));
    const int cy1 = static_cast<int>(std::floor((std::max(a.y, b.y) - grid_y0_) / cell_));
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) {
        grid_[static_cast<std::size_t>(cy * grid_w_ + cx)].push_back(e.id);
      }
    }
  }
  stamp_.assign(g.edges().size(), 0);
}

int Planner::segment_resource(EdgeId edge, double s) const {
  const auto e = static_cast<std::size_t>(edge);
  const int j = std::clamp(static_cast<int>(std::floor(s / segment_len_.at(e))), 0, segments_of_[e] - 1);
  return first_segment_[e] + j;
}

int Planner::junction_resource(NodeId n) const {
  const auto it = junction_of_.find(n);
  return it == junction_of_.end() ? -1 : it->second;
}

int Planner::plan_length(double top_speed) const {
  const double step = cfg_.service_decel * kTickSeconds;
  const int tail = static_cast<int>(std::ceil(std::max(0.0, top_speed) / step - 1e-9)) + 2;
  return std::min(127, cfg_.horizon + tail);
}

void Planner::segments_near(Vec2 p, double radius, std::vector<int>& out) const {
  const auto& g = map_->lanes;
  ++stamp_gen_;
  const int cx0 = std::max(0, static_cast<int>(std::floor((p.x - radius - grid_x0_) / cell_)));
  const int cx1 = std::min(grid_w_ - 1, static_cast<int>(std::floor((p.x + radius - grid_x0_) / cell_)));
  const int cy0 = std::max(0, static_cast<int>(std::floor((p.y - radius - grid_y0_) / cell_)));
  const int cy1 = std::min(grid_h_ - 1, static_cast<int>(std::floor((p.y + radius - grid_y0_) / cell_)));
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      for (int eid : grid_[static_cast<std::size_t>(cy * grid_w_ + cx)]) {
        if (stamp_[eid] == stamp_gen_) {
          continue;
        }
        stamp_[eid] = stamp_gen_;
        const auto& e = g.edge(eid);
        const Vec2 a = g.node(e.from).position;
        const Vec2 b = g.node(e.to).position;
        if (point_segment_distance(p, a, b) > radius) {
          continue;
        }
        const auto ei = static_cast<std::size_t>(eid);
        const Vec2 step = (b - a) * (segment_len_[ei] / e.length);
        for (int j = 0; j < segments_of_[ei]; ++j) {
          const Vec2 s0 = a + step * static_cast<double>(j);
          if (point_segment_distance(p, s0, s0 + step) <= radius) {
            out.push_back(first_segment_[ei] + j);
          }
        }
      }
    }
  }
}

void Planner::interval_cells(const Route& r, double a, double b, double junction_pad,
                             std::vector<int>& out) const {
  out.clear();
  if (r.edges.empty()) {
    return;
  }
  const auto& g = map_->lanes;
  for (std::size_t i = r.edge_index(a); i < r.edges.size() && r.start[i] <= b; ++i) {
    const auto e = static_cast<std::size_t>(r.edges[i]);
    const double len = g.edge(r.edges[i]).length;
    if (r.start[i] + len < a) {
      continue;
    }
    const double lo = std::max(0.0, a - r.start[i]);
    const double hi = std::min(len, b - r.start[i]);
    const int j0 = std::min(segments_of_[e] - 1, static_cast<int>(std::floor(lo / segment_len_[e])));
    const int j1 = std::min(segments_of_[e] - 1, static_cast<int>(std::floor(hi / segment_len_[e])));
    for (int j = j0; j <= j1; ++j) {
      out.push_back(first_segment_[e] + j);
    }
  }
  if (junction_pad < 0.0) {
    return;
  }
  for (const auto& [node, s] : r.junctions) {
    if (s >= a - junction_pad && s <= b + junction_pad) {
      out.push_back(junction_resource(node));
    }
  }
}

double Planner::allowed_speed(const Route& r, const std::vector<double>& lim_end, double s, double cap) const {
  const auto& g = map_->lanes;
  const std::size_t i = r.edge_index(s);
  const auto& e = g.edge(r.edges[i]);
  const double end = r.start[i] + e.length;
  double v = std::min(e.speed_cap, std::sqrt(lim_end[i] * lim_end[i] + 2.0 * cfg_.plan_decel * std::max(0.0, end - s)));
  if (r.goal_s) {
    v = std::min(v, std::sqrt(2.0 * cfg_.plan_decel * std::max(0.0, *r.goal_s - s)));
  }
  return std::min(v, cap);
}

PlanResult Planner::plan_one(const PlanRequest& req, const std::vector<Mask>& occ, const std::vector<Mask>& blocked,
                             int K, std::vector<std::pair<int, Mask>>& cells_out, bool& over_budget) {
  const auto& g = map_->lanes;
  const Route& r = *req.route;
  PlanResult res;
  res.id = req.id;

  std::vector<double> lim_end(r.edges.size(), 0.0);
  for (std::size_t k = r.edges.size(); k-- > 0;) {
    const auto& e = g.edge(r.edges[k]);
    if (k + 1 == r.edges.size()) {
      lim_end[k] = e.speed_cap;
    } else {
      const auto& n = g.edge(r.edges[k + 1]);
      lim_end[k] = std::min(n.speed_cap, std::sqrt(lim_end[k + 1] * lim_end[k + 1] + 2.0 * cfg_.plan_decel * n.length));
    }
  }

  const double dt = kTickSeconds;
  const double hl = cfg_.half_length;
  const double sd = cfg_.service_decel;
  auto front = [&](double s, double v) { return s + hl + brake_extent(v, sd) + cfg_.margin; };
  auto later = [&](int from) -> Mask {
    Mask m = 0;
    for (int j = from; j <= K; ++j) {
      m |= Mask{1} << j;
    }
    return m;
  };

  std::vector<int> cells;
  auto free_from = [&](double s2, double v2, int off) {
    const Mask m = later(off);
    const double b = front(s2, v2);
    interval_cells(r, s2 - hl, b, cfg_.junction_radius, cells);
    work_ += static_cast<long>(cells.size());
    for (int c : cells) {
      if (occ[c] & m) {
        return false;
      }
    }
    interval_cells(r, s2 + 1.0, b, -1.0, cells);
    work_ += static_cast<long>(cells.size());
    for (int c : cells) {
      if (blocked[c] & m) {
        return false;
      }
    }
    return true;
  };

  std::vector<double> arcs{req.s0}, speeds{req.v0};
  const int H = std::min(cfg_.horizon, K);
  for (int k = 0; k < H; ++k) {
    if (work_ > cfg_.work_budget) {
      over_budget = true;
      res.skipped = true;
      return res;
    }
    const double v = speeds.back();
    const double s = arcs.back();
    const double bottom = std::max(0.0, v - sd * dt);
    const double top = std::max(bottom, std::min(v + cfg_.max_accel * dt, std::max(0.0, req.cap)));
    std::vector<double> cands;
    const int n = std::max(2, cfg_.candidates);
    for (int i = 0; i < n; ++i) {
      cands.push_back(std::max(bottom, top - (top - bottom) * i / (n - 1)));
    }
    if (r.goal_s) {
      const double land = 2.0 * (*r.goal_s - s) / dt - v;
      if (land > bottom && land < top) {
        cands.push_back(land);
      }
    }
    std::sort(cands.begin(), cands.end(), std::greater<>());
    std::optional<double> chosen;
    for (double c : cands) {
      const double s2 = s + (v + c) / 2.0 * dt;
      const bool is_bottom = c <= bottom + 1e-12;
      if (!is_bottom) {
        if (r.goal_s && s2 > *r.goal_s + 1e-6) {
          continue;
        }
        if (c > allowed_speed(r, lim_end, s2, req.cap) + 1e-9) {
          continue;
        }
      }
      if (free_from(s2, c, k + 1)) {
        chosen = c;
        break;
      }
    }
    if (!chosen) {
      chosen = bottom;
      res.degraded = true;
    }
    arcs.push_back(s + (v + *chosen) / 2.0 * dt);
    speeds.push_back(*chosen);
  }
  while (static_cast<int>(arcs.size()) <= K) {
    const double v = speeds.back();
    const double v2 = std::max(0.0, v - sd * dt);
    arcs.push_back(arcs.back() + (v + v2) / 2.0 * dt);
    speeds.push_back(v2);
  }

  // Cells held by the new plan.
  std::map<int, Mask> held;
  for (int j = 1; j <= K; ++j) {
    interval_cells(r, arcs[j] - hl, front(arcs[j], speeds[j]), cfg_.junction_radius, cells);
    for (int c : cells) {
      held[c] |= Mask{1} << j;
    }
  }
  cells_out.assign(held.begin(), held.end());

  res.plan.arcs = arcs;
  res.plan.speeds = speeds;
  res.plan.route_version = r.version;
  res.traj.horizon_ticks = K;
  res.traj.points.reserve(arcs.size());
  for (int k = 0; k <= K; ++k) {
    res.traj.points.push_back({r.pose_at(g, arcs[k]), speeds[k], k});
  }
  return res;
}

std::vector<PlanResult> Planner::plan_all(const std::vector<PlanRequest>& requests,
                                          const std::vector<Keepout>& keepouts, Tick now,
                                          ReservationTable* table) {
  work_ = 0;
  const int R = resource_count();
  double top = 0.0;
  for (const auto& q : requests) {
    top = std::max({top, q.cap, q.v0});
  }
  const int K = plan_length(top);
  auto bit = [](int j) { return Mask{1} << j; };
  Mask all = 0;
  for (int j = 1; j <= K; ++j) {
    all |= bit(j);
  }

  // Keep-out masks per segment.
  std::vector<Mask> blocked(static_cast<std::size_t>(R), 0);
  std::vector<int> near;
  for (const auto& ko : keepouts) {
    if (ko.positions.empty()) {
      continue;
    }
    const double radius = cfg_.half_width + ko.radius + cfg_.ped_clearance;
    std::optional<Vec2> last;
    for (int j = 0; j <= K; ++j) {
      const Vec2 p = ko.positions[std::min<std::size_t>(static_cast<std::size_t>(j), ko.positions.size() - 1)];
      if (!last || !(p == *last)) {
        near.clear();
        segments_near(p, radius, near);
        last = p;
      }
      for (int e : near) {
        blocked[e] |= bit(j);
      }
    }
  }

  // Pre-reservations: current braking envelope plus every plan the vehicle may be executing.
  const double hl = cfg_.half_length;
  auto front = [&](double s, double v) { return s + hl + brake_extent(v, cfg_.service_decel) + cfg_.margin; };
  std::vector<std::vector<std::pair<int, Mask>>> pre(requests.size());
  std::vector<int> cells;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& q = requests[i];
    std::map<int, Mask> held;
    interval_cells(*q.route, q.s0 - hl, front(q.s0, q.v0), cfg_.junction_radius, cells);
    for (int c : cells) {
      held[c] |= all;
    }
    for (const auto& c : q.commitments) {
      if (c.route_version != q.route->version || c.arcs.empty()) {
        continue;
      }
      const Tick base = now - c.issued_tick;
      for (int j = 1; j <= K; ++j) {
        const Tick idx = base + j;
        if (idx < 0) {
          continue;
        }
        const auto k = static_cast<std::size_t>(std::min<Tick>(idx, static_cast<Tick>(c.arcs.size()) - 1));
        interval_cells(*q.route, c.arcs[k] - hl, front(c.arcs[k], c.speeds[k]), cfg_.junction_radius, cells);
        for (int cell : cells) {
          held[cell] |= bit(j);
        }
      }
    }
    pre[i].assign(held.begin(), held.end());
  }

  std::vector<PlanResult> results;
  std::vector<std::vector<std::pair<int, Mask>>> fresh(requests.size());
  std::vector<Mask> occ(static_cast<std::size_t>(R), 0);
  bool over = false;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (over) {
      PlanResult skipped;
      skipped.id = requests[i].id;
      skipped.skipped = true;
      results.push_back(std::move(skipped));
      continue;
    }
    std::fill(occ.begin(), occ.end(), Mask{0});
    for (std::size_t j = 0; j < requests.size(); ++j) {
      if (j == i) {
        continue;
      }
      for (const auto& [c, m] : pre[j]) {
        occ[c] |= m;
      }
      if (j < i) {
        for (const auto& [c, m] : fresh[j]) {
          occ[c] |= m;
        }
      }
    }
    results.push_back(plan_one(requests[i], occ, blocked, K, fresh[i], over));
    if (results.back().skipped) {
      fresh[i].clear();
      continue;
    }
    results.back().traj.issued_tick = now;
    results.back().plan.issued_tick = now;
    if (table) {
      for (const auto& [c, m] : fresh[i]) {
        for (int j = 1; j <= K; ++j) {
          if (m & bit(j)) {
            table->reserve(c, now + j, requests[i].id);
          }
        }
      }
    }
  }
  return results;
}

}  // namespace ixda
