#include "render.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "wmdrive/backbone.hpp"
#include "wmdrive/errors.hpp"
#include "wmdrive/eval.hpp"
#include "wmdrive/forecast_heads.hpp"

namespace wmdrive::cli {

std::string coord(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

std::string points(const std::vector<Vec2>& pts) {
  std::string s;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + coord(pts[i].x) + "," + coord(pts[i].y);
  return s;
}

std::string polygon(const std::vector<Vec2>& pts, const char* style) {
  return "<polygon points=\"" + points(pts) + "\" " + style + "/>\n";
}

std::string polyline(const std::vector<Vec2>& pts, const char* id, const char* style) {
  return "<polyline id=\"" + std::string(id) + "\" points=\"" + points(pts) + "\" fill=\"none\" " + style + "/>\n";
}

std::vector<Vec2> box_points(const OrientedBox& b) {
  const auto c = b.corners();
  return {c.begin(), c.end()};
}

std::vector<Vec2> global_plan(const Pose2D& origin, const Trajectory& t) {
  std::vector<Vec2> out;
  for (const auto& w : t.waypoints) out.push_back(to_global(origin, w));
  return out;
}

}  // namespace

void write_rollout(const Scenario& sc, const Trajectory& plan, const RolloutResult& r,
                   const std::filesystem::path& dir, bool render) {
  std::filesystem::create_directories(dir);
  const auto planned = global_plan(r.origin, plan);
  std::vector<Vec2> expert;
  for (const auto& p : sc.expert_poses) expert.push_back(p.position());
  const int H = static_cast<int>(r.realized.size());

  {
    auto f = open_out(dir / "trace.csv");
    f << "frame,x,y,yaw,speed,plan_x,plan_y,expert_x,expert_y,collision,drivable\n";
    for (int k = 0; k < H; ++k) {
      const auto& p = r.realized[static_cast<std::size_t>(k)];
      const double frame = sc.current_frame() + k + 1;
      const bool hit = collides_at(sc, p, frame);
      const bool inside = sc.map.inside(sc.ego_box(p));
      f << k + 1 << "," << coord(p.x) << "," << coord(p.y) << "," << coord(p.yaw) << ","
        << coord(r.speeds[static_cast<std::size_t>(k) + 1]) << "," << coord(planned[static_cast<std::size_t>(k)].x)
        << "," << coord(planned[static_cast<std::size_t>(k)].y) << "," << coord(expert[static_cast<std::size_t>(k)].x)
        << "," << coord(expert[static_cast<std::size_t>(k)].y) << "," << (hit ? 1 : 0) << "," << (inside ? 1 : 0)
        << "\n";
    }
    if (!f) throw IoError("write failed in " + dir.string());
  }
  {
    const auto s = score_rollout(sc, r);
    auto f = open_out(dir / "score.csv");
    f << "id,NC,DAC,EP,TTC,C,aggregate,reward\n"
      << sc.seed << "," << coord(s.nc) << "," << coord(s.dac) << "," << coord(s.ep) << "," << coord(s.ttc) << ","
      << coord(s.c) << "," << coord(aggregate(s)) << "," << coord(reward(r, sc.expert_future)) << "\n";
  }
  if (!render) return;

  for (int k = 1; k <= H; ++k) {
    const Pose2D ego = r.realized[static_cast<std::size_t>(k) - 1];
    const double frame = sc.current_frame() + k;
    const double half_w = 40.0, half_h = 30.0;
    const double cx = ego.x + 10.0 * std::cos(ego.yaw);
    const double cy = ego.y + 10.0 * std::sin(ego.yaw);
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    // The world group flips y so that polyline points are raw world coordinates.
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"" + coord(cx - half_w) +
           " " + coord(-cy - half_h) + " " + coord(2 * half_w) + " " + coord(2 * half_h) + "\">\n";
    svg += "<rect x=\"" + coord(cx - half_w) + "\" y=\"" + coord(-cy - half_h) + "\" width=\"" + coord(2 * half_w) +
           "\" height=\"" + coord(2 * half_h) + "\" fill=\"#f4f1e8\"/>\n";
    svg += "<g transform=\"scale(1,-1)\">\n";
    for (const auto& poly : sc.map.drivable) svg += polygon(poly, "fill=\"#c9c9c9\" stroke=\"none\"");
    svg += polyline(sc.map.centerline, "centerline", "stroke=\"#ffffff\" stroke-width=\"0.2\" stroke-dasharray=\"1,1\"");
    for (const auto& a : sc.agents) {
      if (a.kind == AgentKind::kVehicle) {
        svg += polygon(box_points(a.box_at(frame)), "fill=\"#3b6ea5\" stroke=\"#1d3857\" stroke-width=\"0.1\"");
      } else {
        const auto d = a.disc_at(frame);
        svg += "<circle cx=\"" + coord(d.center.x) + "\" cy=\"" + coord(d.center.y) + "\" r=\"" + coord(d.radius) +
               "\" fill=\"#d9822b\"/>\n";
      }
    }
    std::vector<Vec2> expert_pts;
    for (int j = 0; j < H; ++j) expert_pts.push_back(expert[static_cast<std::size_t>(j)]);
    svg += polyline(expert_pts, "expert", "stroke=\"#2a9d4b\" stroke-width=\"0.25\"");
    svg += polyline(planned, "planned", "stroke=\"#c0392b\" stroke-width=\"0.25\"");
    std::vector<Vec2> path{r.origin.position()};
    for (int j = 0; j < k; ++j) path.push_back(r.realized[static_cast<std::size_t>(j)].position());
    svg += polyline(path, "realized", "stroke=\"#111111\" stroke-width=\"0.3\"");
    svg += polygon(box_points(sc.ego_box(ego)), "fill=\"#8e44ad\" stroke=\"#4a235a\" stroke-width=\"0.1\"");
    svg += "</g>\n</svg>\n";

    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02d.svg", k);
    auto f = open_out(dir / name);
    f << svg;
    if (!f) throw IoError("write failed in " + dir.string());
  }
}

void write_forecasts(const Model& m, const Scenario& sc, int window, const Trajectory& plan,
                     const std::filesystem::path& path) {
  const int first = sc.current_frame() - (window - 1);
  // One extra logged frame supplies the targets of the last window frame.
  const auto frames = logged_window(sc, first, window + 1);
  const auto tokens = make_tokens(m, frames, window);
  const auto out = backbone_forward(m.net.bb, tokens);
  const int K = m.cfg.num_rays;
  const int E = m.cfg.embed_dim;

  auto f = open_out(path);
  f << "frame,ray,pred_range,target_range,confidence,pred_vehicle,target_vehicle,pred_pedestrian,target_pedestrian\n";
  for (int i = 0; i < window; ++i) {
    const auto cond = frame_pair(out, i, m.cfg.width);
    const RelativeMovement next =
        i + 1 < window ? frames.moves[static_cast<std::size_t>(i) + 1] : movement_from_plan(plan);
    const auto da = action_token(next, frames.command);
    const auto depth = depth_head(m.net.heads.depth, cond, da);
    const Observation& target = frames.obs[static_cast<std::size_t>(i) + 1];
    std::vector<std::vector<double>> pred_mag, target_mag;
    for (int c = 0; c < kNumQueryClasses; ++c) {
      const auto q = static_cast<QueryClass>(c);
      const auto& h = m.classes.at(q);
      const auto pred = semantic_head(m.net.heads.sem, cond, da, h);
      const auto tgt = semantic_target(target, q, m.classes);
      std::vector<double> pm(static_cast<std::size_t>(K)), tm(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        double a = 0.0, b = 0.0;
        for (int e = 0; e < E; ++e) {
          const std::size_t idx = static_cast<std::size_t>(k * E + e);
          a += pred[idx] * pred[idx];
          b += tgt[idx] * tgt[idx];
        }
        pm[static_cast<std::size_t>(k)] = std::sqrt(a);
        tm[static_cast<std::size_t>(k)] = std::sqrt(b);
      }
      pred_mag.push_back(pm);
      target_mag.push_back(tm);
    }
    for (int k = 0; k < K; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      f << first + i + 1 << "," << k << "," << coord(metric_range(depth.d_hat[kk], m.cfg.max_range)) << ","
        << coord(target.ranges[kk]) << "," << coord(depth.c_hat[kk]) << "," << coord(pred_mag[0][kk]) << ","
        << coord(target_mag[0][kk]) << "," << coord(pred_mag[1][kk]) << "," << coord(target_mag[1][kk]) << "\n";
    }
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace wmdrive::cli
