#include "oodp/env_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace oodp::env {
namespace {

constexpr int kLayoutFormatVersion = 1;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic per-pixel texture noise in [-amp, amp].
int texture_noise(int y, int x, std::uint64_t salt, int amp) {
  const std::uint64_t h = mix((static_cast<std::uint64_t>(y) << 32) ^ static_cast<std::uint64_t>(x) ^ (salt << 48));
  return static_cast<int>(h % static_cast<std::uint64_t>(2 * amp + 1)) - amp;
}

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

using Rgb = std::array<int, 3>;

struct Palette {
  Rgb free_bg;
  Rgb wall_brick;
  Rgb wall_mortar;
  Rgb ladder_fill;
  Rgb ladder_rail;
  Rgb agent_body;
  Rgb agent_edge;
  Rgb agent_eye;
};

// Palette 0 is the training appearance; others perturb wall/ladder colors
// for appearance-robustness probes. Agent colors never collide with tiles.
const Palette& palette_for(int id) {
  static const std::array<Palette, 3> kPalettes{{
      {{20, 24, 48}, {150, 70, 40}, {96, 96, 96}, {110, 90, 30}, {220, 190, 40}, {40, 220, 90}, {20, 140, 60}, {250, 250, 250}},
      {{20, 24, 48}, {60, 80, 160}, {90, 90, 110}, {120, 70, 120}, {200, 140, 220}, {40, 220, 90}, {20, 140, 60}, {250, 250, 250}},
      {{36, 30, 30}, {170, 50, 50}, {120, 110, 100}, {90, 100, 40}, {200, 210, 60}, {40, 220, 90}, {20, 140, 60}, {250, 250, 250}},
  }};
  return kPalettes[static_cast<std::size_t>(std::clamp(id, 0, static_cast<int>(kPalettes.size()) - 1))];
}

bool is_blocking(Variant variant, Cell c) {
  return variant == Variant::Mars ? c == Cell::Rock : c == Cell::Wall;
}

bool ladder_below(const EnvLayout& layout, int u, int v) {
  const int t = layout.tile_px;
  const int y = u + t;
  if (y >= layout.height_px()) return false;
  const int row = y / t;
  for (int col = v / t; col <= (v + t - 1) / t; ++col)
    if (layout.at(row, col) == Cell::Ladder) return true;
  return false;
}

bool supported(const EnvLayout& layout, int u, int v) {
  return blocked(layout, u + 1, v) || ladder_below(layout, u, v);
}

// Largest d in [0, max_d] such that every intermediate box is unblocked.
int free_run(const EnvLayout& layout, int u, int v, int du, int dv, int max_d) {
  int d = 0;
  while (d < max_d && !blocked(layout, u + du * (d + 1), v + dv * (d + 1))) ++d;
  return d;
}

char cell_char(Cell c) {
  switch (c) {
    case Cell::Free: return '.';
    case Cell::Wall: return '#';
    case Cell::Ladder: return 'H';
    case Cell::Flat: return '_';
    case Cell::Rock: return '^';
  }
  return '?';
}

Cell parse_cell(char ch) {
  switch (ch) {
    case '.': return Cell::Free;
    case '#': return Cell::Wall;
    case 'H': return Cell::Ladder;
    case '_': return Cell::Flat;
    case '^': return Cell::Rock;
    default: throw LayoutFormatError(std::string("unknown cell character '") + ch + "'");
  }
}

// ------------------------------------------------------------ generators

EnvLayout try_platform_layout(const LayoutSpec& spec, std::mt19937_64& rng) {
  EnvLayout layout = make_empty_layout(Variant::Platform, spec.grid_h, spec.grid_w, spec.tile_px);
  layout.palette = spec.palette;
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int gh = spec.grid_h, gw = spec.grid_w;
  const int n_platforms = uniform(spec.min_platforms, spec.max_platforms);
  // Platform rows: at least three rows apart and three above the floor.
  std::vector<int> rows;
  int floor_row = gh - 1;
  for (int p = 0; p < n_platforms; ++p) {
    const int hi = floor_row - 3;
    if (hi < 2) return {};
    const int lo = std::max(2, hi - 1);
    const int r = uniform(lo, hi);
    rows.push_back(r);
    floor_row = r;
  }
  for (int r : rows) {
    const int len = uniform(3, gw - 3);
    const int c0 = uniform(1, gw - 1 - len);
    for (int c = c0; c < c0 + len; ++c) layout.at(r, c) = Cell::Wall;
  }
  // One ladder per platform, from the platform row down to the floor below.
  for (int r : rows) {
    std::vector<int> cols;
    for (int c = 1; c < gw - 1; ++c)
      if (layout.at(r, c) == Cell::Wall) cols.push_back(c);
    if (cols.empty()) return {};
    const int c = cols[static_cast<std::size_t>(uniform(0, static_cast<int>(cols.size()) - 1))];
    int bottom = r + 1;
    while (bottom < gh && layout.at(bottom, c) != Cell::Wall) ++bottom;
    for (int y = r; y < bottom; ++y) layout.at(y, c) = Cell::Ladder;
  }
  // Single-tile obstacles resting on floors.
  const int n_blocks = uniform(spec.min_blocks, spec.max_blocks);
  for (int b = 0, attempts = 0; b < n_blocks && attempts < 200; ++attempts) {
    const int r = uniform(1, gh - 2), c = uniform(1, gw - 2);
    if (layout.at(r, c) != Cell::Free || layout.at(r + 1, c) != Cell::Wall) continue;
    if (layout.at(r, c - 1) == Cell::Ladder || layout.at(r, c + 1) == Cell::Ladder) continue;
    if (r >= 1 && layout.at(r - 1, c) == Cell::Ladder) continue;
    layout.at(r, c) = Cell::Wall;
    ++b;
  }
  return layout;
}

bool platform_layout_ok(const EnvLayout& layout) {
  const AgentState start = spawn_state(layout, 0);
  if (!is_valid_state(layout, start)) return false;
  const auto states = reachable_states(layout, start);
  const int floor_u = (layout.grid_h - 2) * layout.tile_px;
  bool ladder = false, upper = false;
  for (const auto& s : states) {
    ladder = ladder || s.mode == Mode::OnLadder;
    upper = upper || (s.mode == Mode::Grounded && s.u < floor_u);
  }
  return ladder && upper;
}

EnvLayout try_mars_layout(const LayoutSpec& spec, std::mt19937_64& rng) {
  EnvLayout layout = make_empty_layout(Variant::Mars, spec.grid_h, spec.grid_w, spec.tile_px);
  layout.palette = spec.palette;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Value noise: random lattice every 3 cells, bilinearly interpolated onto
  // cell corners, plus a small per-corner roughness term.
  const int lattice = 3;
  const int lh = spec.grid_h / lattice + 2, lw = spec.grid_w / lattice + 2;
  std::vector<double> coarse(static_cast<std::size_t>(lh * lw));
  for (auto& v : coarse) v = unit(rng);
  const double amplitude = 0.3 + 0.9 * unit(rng);
  const double roughness = 0.08;
  const int ch = spec.grid_h + 1, cw = spec.grid_w + 1;
  std::vector<double> corner(static_cast<std::size_t>(ch * cw));
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const double fy = static_cast<double>(y) / lattice, fx = static_cast<double>(x) / lattice;
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const double ty = fy - y0, tx = fx - x0;
      auto at = [&](int yy, int xx) { return coarse[static_cast<std::size_t>(yy * lw + xx)]; };
      const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                       ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
      corner[static_cast<std::size_t>(y * cw + x)] = amplitude * v + roughness * unit(rng);
    }
  }
  int rocks = 0, interior = 0;
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) {
      auto z = [&](int yy, int xx) { return corner[static_cast<std::size_t>(yy * cw + xx)]; };
      const double gx = ((z(r, c + 1) + z(r + 1, c + 1)) - (z(r, c) + z(r + 1, c))) / 2.0;
      const double gy = ((z(r + 1, c) + z(r + 1, c + 1)) - (z(r, c) + z(r, c + 1))) / 2.0;
      const double angle = std::atan(std::hypot(gx, gy)) * 180.0 / std::numbers::pi;
      const bool border = r == 0 || c == 0 || r == spec.grid_h - 1 || c == spec.grid_w - 1;
      layout.elevation_deg[static_cast<std::size_t>(r * spec.grid_w + c)] = border ? 90.0 : angle;
      layout.at(r, c) = (border || angle >= Physics{}.max_slope_deg) ? Cell::Rock : Cell::Flat;
      if (!border) {
        ++interior;
        rocks += layout.at(r, c) == Cell::Rock ? 1 : 0;
      }
    }
  }
  const double fraction = static_cast<double>(rocks) / std::max(1, interior);
  if (fraction < spec.min_rock_fraction || fraction > spec.max_rock_fraction) return {};
  return layout;
}

bool mars_layout_ok(const EnvLayout& layout) {
  const AgentState start = spawn_state(layout, 0);
  if (!is_valid_state(layout, start)) return false;
  const auto states = reachable_states(layout, start);
  int flat = 0;
  for (Cell c : layout.cells) flat += c == Cell::Flat ? 1 : 0;
  const int t = layout.tile_px;
  std::vector<char> seen(layout.cells.size(), 0);
  int touched = 0;
  for (const auto& s : states) {
    if (s.u % t || s.v % t) continue;
    auto& flag = seen[static_cast<std::size_t>((s.u / t) * layout.grid_w + s.v / t)];
    if (!flag) {
      flag = 1;
      ++touched;
    }
  }
  return 2 * touched >= flat;
}

}  // namespace

const char* to_string(Action a) {
  switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Noop: return "noop";
  }
  return "?";
}

const char* to_string(Variant v) { return v == Variant::Mars ? "mars" : "platform"; }

Variant parse_variant(const std::string& s) {
  if (s == "platform") return Variant::Platform;
  if (s == "mars") return Variant::Mars;
  throw std::invalid_argument("unknown variant '" + s + "' (expected platform or mars)");
}

EnvLayout make_empty_layout(Variant variant, int grid_h, int grid_w, int tile_px) {
  if (grid_h < 3 || grid_w < 3 || tile_px < 1) {
    throw std::invalid_argument("layout needs at least 3x3 cells and a positive tile size");
  }
  EnvLayout layout;
  layout.variant = variant;
  layout.grid_h = grid_h;
  layout.grid_w = grid_w;
  layout.tile_px = tile_px;
  const Cell open = variant == Variant::Mars ? Cell::Flat : Cell::Free;
  const Cell solid = variant == Variant::Mars ? Cell::Rock : Cell::Wall;
  layout.cells.assign(static_cast<std::size_t>(grid_h * grid_w), open);
  for (int r = 0; r < grid_h; ++r)
    for (int c = 0; c < grid_w; ++c)
      if (r == 0 || c == 0 || r == grid_h - 1 || c == grid_w - 1) layout.at(r, c) = solid;
  if (variant == Variant::Mars) {
    layout.elevation_deg.assign(layout.cells.size(), 0.0);
    for (std::size_t i = 0; i < layout.cells.size(); ++i)
      if (layout.cells[i] == Cell::Rock) layout.elevation_deg[i] = 90.0;
  }
  return layout;
}

bool overlaps(const EnvLayout& layout, int u, int v, Cell kind) {
  const int t = layout.tile_px;
  const int r0 = std::max(0, u / t), r1 = std::min(layout.grid_h - 1, (u + t - 1) / t);
  const int c0 = std::max(0, v / t), c1 = std::min(layout.grid_w - 1, (v + t - 1) / t);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (layout.at(r, c) == kind) return true;
  return false;
}

bool blocked(const EnvLayout& layout, int u, int v) {
  const int t = layout.tile_px;
  if (u < 0 || v < 0 || u + t > layout.height_px() || v + t > layout.width_px()) return true;
  return overlaps(layout, u, v, layout.variant == Variant::Mars ? Cell::Rock : Cell::Wall);
}

Mode classify(const EnvLayout& layout, int u, int v) {
  if (layout.variant == Variant::Mars) return Mode::Grounded;
  if (overlaps(layout, u, v, Cell::Ladder)) return Mode::OnLadder;
  if (supported(layout, u, v)) return Mode::Grounded;
  return Mode::Airborne;
}

AgentState make_state(const EnvLayout& layout, int u, int v) {
  return {u, v, classify(layout, u, v)};
}

bool is_valid_state(const EnvLayout& layout, const AgentState& s) {
  return !blocked(layout, s.u, s.v) && s.mode == classify(layout, s.u, s.v);
}

AgentState step(const EnvLayout& layout, const AgentState& state, Action action,
                const Physics& physics) {
  int u = state.u, v = state.v;
  const bool on_ladder = overlaps(layout, u, v, Cell::Ladder);
  if (!on_ladder && !supported(layout, u, v)) {
    // Falling: stop on support, or when catching a ladder.
    for (int d = 0; d < physics.fall_px; ++d) {
      if (blocked(layout, u + 1, v)) break;
      ++u;
      if (supported(layout, u, v) || overlaps(layout, u, v, Cell::Ladder)) break;
    }
    return make_state(layout, u, v);
  }
  switch (action) {
    case Action::Up:
      if (on_ladder) u -= free_run(layout, u, v, -1, 0, physics.step_px);
      break;
    case Action::Down:
      if (on_ladder || ladder_below(layout, u, v)) u += free_run(layout, u, v, 1, 0, physics.step_px);
      break;
    case Action::Left: v -= free_run(layout, u, v, 0, -1, physics.step_px); break;
    case Action::Right: v += free_run(layout, u, v, 0, 1, physics.step_px); break;
    case Action::Noop: break;
  }
  return make_state(layout, u, v);
}

AgentState step_mars(const EnvLayout& layout, const AgentState& state, Action action,
                     const Physics& physics) {
  int du = 0, dv = 0;
  switch (action) {
    case Action::Up: du = -physics.step_px; break;
    case Action::Down: du = physics.step_px; break;
    case Action::Left: dv = -physics.step_px; break;
    case Action::Right: dv = physics.step_px; break;
    case Action::Noop: break;
  }
  if (blocked(layout, state.u + du, state.v + dv)) return state;
  return {state.u + du, state.v + dv, Mode::Grounded};
}

AgentState advance(const EnvLayout& layout, const AgentState& state, Action action,
                   const Physics& physics) {
  return layout.variant == Variant::Mars ? step_mars(layout, state, action, physics)
                                         : step(layout, state, action, physics);
}

// ------------------------------------------------------------- rendering

Image render_background(const EnvLayout& layout) {
  const int t = layout.tile_px;
  Image img(layout.height_px(), layout.width_px());
  const Palette& pal = palette_for(layout.palette);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const Cell cell = layout.at(y / t, x / t);
      const int ty = y % t, tx = x % t;
      Rgb rgb{};
      int noise = 0;
      switch (cell) {
        case Cell::Free:
          rgb = pal.free_bg;
          noise = texture_noise(y, x, 1, 6);
          break;
        case Cell::Wall: {
          const bool mortar = ty % 4 == 3 || (((y / 4) % 2 == 0) ? tx == 7 : tx == 3);
          rgb = mortar ? pal.wall_mortar : pal.wall_brick;
          noise = texture_noise(y, x, 2, 4);
          break;
        }
        case Cell::Ladder: {
          const bool rail = tx <= 1 || tx >= t - 2 || ty % 4 == 1;
          rgb = rail ? pal.ladder_rail : pal.ladder_fill;
          break;
        }
        case Cell::Flat:
        case Cell::Rock: {
          const double angle = layout.elevation_deg.empty()
                                   ? 0.0
                                   : layout.elevation_deg[static_cast<std::size_t>((y / t) * layout.grid_w + x / t)];
          const int shade = static_cast<int>(std::min(angle, 30.0) * 3.0);
          rgb = cell == Cell::Rock ? Rgb{120 - shade / 2, 62 - shade / 4, 40}
                                   : Rgb{196 - shade, 120 - shade / 2, 70};
          noise = texture_noise(y, x, 3, cell == Cell::Rock ? 14 : 8);
          break;
        }
      }
      auto* p = img.px(y, x);
      for (int k = 0; k < 3; ++k) p[k] = clamp_u8(rgb[static_cast<std::size_t>(k)] + noise);
    }
  }
  return img;
}

Image render(const EnvLayout& layout, const AgentState& state) {
  Image img = render_background(layout);
  const Palette& pal = palette_for(layout.palette);
  const int t = layout.tile_px;
  const bool rover = layout.variant == Variant::Mars;
  for (int dy = 0; dy < t; ++dy) {
    for (int dx = 0; dx < t; ++dx) {
      const int y = state.u + dy, x = state.v + dx;
      if (y < 0 || x < 0 || y >= img.h || x >= img.w) continue;
      const bool edge = dy == 0 || dx == 0 || dy == t - 1 || dx == t - 1;
      const bool eye = dy == t / 4 && (dx == t / 4 || dx == t - 1 - t / 4);
      Rgb rgb = eye ? pal.agent_eye : (edge ? pal.agent_edge : pal.agent_body);
      if (rover) rgb = eye ? Rgb{20, 20, 20} : (edge ? Rgb{60, 90, 230} : Rgb{235, 235, 245});
      auto* p = img.px(y, x);
      for (int k = 0; k < 3; ++k) p[k] = clamp_u8(rgb[static_cast<std::size_t>(k)]);
    }
  }
  return img;
}

std::vector<Cell> cell_map(const EnvLayout& layout) {
  const int t = layout.tile_px;
  std::vector<Cell> out(static_cast<std::size_t>(layout.height_px() * layout.width_px()));
  for (int y = 0; y < layout.height_px(); ++y)
    for (int x = 0; x < layout.width_px(); ++x)
      out[static_cast<std::size_t>(y * layout.width_px() + x)] = layout.at(y / t, x / t);
  return out;
}

// ------------------------------------------------------------ generation

std::vector<AgentState> reachable_states(const EnvLayout& layout, const AgentState& start,
                                         const Physics& physics) {
  const int H = layout.height_px(), W = layout.width_px();
  std::vector<char> seen(static_cast<std::size_t>(H * W), 0);
  std::vector<AgentState> out;
  std::deque<AgentState> queue{start};
  seen[static_cast<std::size_t>(start.u * W + start.v)] = 1;
  while (!queue.empty()) {
    const AgentState s = queue.front();
    queue.pop_front();
    out.push_back(s);
    for (Action a : kAllActions) {
      const AgentState n = advance(layout, s, a, physics);
      auto& flag = seen[static_cast<std::size_t>(n.u * W + n.v)];
      if (!flag) {
        flag = 1;
        queue.push_back(n);
      }
    }
  }
  return out;
}

AgentState spawn_state(const EnvLayout& layout, std::uint64_t seed) {
  const int t = layout.tile_px;
  std::vector<AgentState> candidates;
  if (layout.variant == Variant::Mars) {
    for (int r = 1; r < layout.grid_h - 1; ++r)
      for (int c = 1; c < layout.grid_w - 1; ++c)
        if (layout.at(r, c) == Cell::Flat) candidates.push_back({r * t, c * t, Mode::Grounded});
  } else {
    const int r = layout.grid_h - 2;
    for (int c = 1; c < layout.grid_w - 1; ++c)
      if (layout.at(r, c) == Cell::Free) candidates.push_back(make_state(layout, r * t, c * t));
  }
  if (candidates.empty()) throw GenerationError("layout has no open spawn cell");
  std::mt19937_64 rng(seed);
  return candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
}

EnvLayout generate_layout(const LayoutSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    EnvLayout layout = spec.variant == Variant::Mars ? try_mars_layout(spec, rng)
                                                     : try_platform_layout(spec, rng);
    if (layout.cells.empty()) continue;
    const bool ok = spec.variant == Variant::Mars ? mars_layout_ok(layout) : platform_layout_ok(layout);
    if (ok) {
      layout.seed = seed;
      return layout;
    }
  }
  throw GenerationError("no layout satisfied the density and reachability constraints after " +
                        std::to_string(spec.max_retries) + " attempts");
}

EnvSuite generate_env_suite(int k, int m, std::uint64_t seed, const LayoutSpec& spec) {
  if (k < 1 || m < 1) throw std::invalid_argument("generate_env_suite needs k >= 1 and m >= 1");
  std::mt19937_64 rng(seed);
  std::vector<EnvLayout> all;
  const int wanted = k + m;
  int duplicates = 0;
  while (static_cast<int>(all.size()) < wanted) {
    EnvLayout layout = generate_layout(spec, rng());
    const bool dup = std::any_of(all.begin(), all.end(),
                                 [&](const EnvLayout& o) { return o.same_grid(layout); });
    if (dup) {
      if (++duplicates > spec.max_retries) {
        throw GenerationError("could not draw " + std::to_string(wanted) + " distinct layouts");
      }
      continue;
    }
    all.push_back(std::move(layout));
  }
  EnvSuite suite;
  suite.train.assign(all.begin(), all.begin() + k);
  suite.test.assign(all.begin() + k, all.end());
  return suite;
}

// ------------------------------------------------------------- layout IO

std::string serialize_layout(const EnvLayout& layout) {
  std::ostringstream os;
  os << "oodp-layout " << kLayoutFormatVersion << "\n";
  os << "variant " << to_string(layout.variant) << "\n";
  os << "grid " << layout.grid_h << " " << layout.grid_w << "\n";
  os << "tile_px " << layout.tile_px << "\n";
  os << "palette " << layout.palette << "\n";
  os << "seed " << layout.seed << "\n";
  os << "cells\n";
  for (int r = 0; r < layout.grid_h; ++r) {
    for (int c = 0; c < layout.grid_w; ++c) os << cell_char(layout.at(r, c));
    os << "\n";
  }
  if (!layout.elevation_deg.empty()) {
    os << "elevation_deg\n";
    char buf[64];
    for (int r = 0; r < layout.grid_h; ++r) {
      for (int c = 0; c < layout.grid_w; ++c) {
        auto res = std::to_chars(buf, buf + sizeof buf, layout.elevation_deg[static_cast<std::size_t>(r * layout.grid_w + c)]);
        os << (c ? " " : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      os << "\n";
    }
  }
  return os.str();
}

EnvLayout parse_layout(const std::string& text) {
  std::istringstream is(text);
  std::string key;
  int version = 0;
  if (!(is >> key >> version) || key != "oodp-layout") throw LayoutFormatError("missing layout header");
  if (version != kLayoutFormatVersion) {
    throw LayoutFormatError("unsupported layout version " + std::to_string(version));
  }
  EnvLayout layout;
  bool have_cells = false;
  while (is >> key) {
    if (key == "variant") {
      std::string v;
      is >> v;
      layout.variant = parse_variant(v);
    } else if (key == "grid") {
      is >> layout.grid_h >> layout.grid_w;
    } else if (key == "tile_px") {
      is >> layout.tile_px;
    } else if (key == "palette") {
      is >> layout.palette;
    } else if (key == "seed") {
      is >> layout.seed;
    } else if (key == "cells") {
      layout.cells.clear();
      for (int r = 0; r < layout.grid_h; ++r) {
        std::string row;
        if (!(is >> row) || static_cast<int>(row.size()) != layout.grid_w) {
          throw LayoutFormatError("cell row " + std::to_string(r) + " has the wrong width");
        }
        for (char ch : row) layout.cells.push_back(parse_cell(ch));
      }
      have_cells = true;
    } else if (key == "elevation_deg") {
      layout.elevation_deg.resize(static_cast<std::size_t>(layout.grid_h * layout.grid_w));
      for (auto& e : layout.elevation_deg) {
        std::string tok;
        if (!(is >> tok)) throw LayoutFormatError("truncated elevation table");
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), e);
        if (res.ec != std::errc{}) throw LayoutFormatError("bad elevation value '" + tok + "'");
      }
    } else {
      throw LayoutFormatError("unknown layout key '" + key + "'");
    }
    if (!is) throw LayoutFormatError("malformed value for '" + key + "'");
  }
  if (!have_cells) throw LayoutFormatError("layout has no cells section");
  return layout;
}

void save_layout(const EnvLayout& layout, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << serialize_layout(layout);
}

EnvLayout load_layout(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_layout(ss.str());
}

namespace {
std::string indexed(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02zu.layout", prefix, i);
  return buf;
}
}  // namespace

void save_suite(const EnvSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "suite.txt");
  index << "train " << suite.train.size() << "\n" << "test " << suite.test.size() << "\n";
  for (std::size_t i = 0; i < suite.train.size(); ++i) save_layout(suite.train[i], dir / indexed("train", i));
  for (std::size_t i = 0; i < suite.test.size(); ++i) save_layout(suite.test[i], dir / indexed("test", i));
}

EnvSuite load_suite(const std::filesystem::path& dir) {
  std::ifstream index(dir / "suite.txt");
  if (!index) throw std::runtime_error("no suite.txt in " + dir.string());
  std::string key;
  std::size_t n_train = 0, n_test = 0;
  index >> key >> n_train >> key >> n_test;
  EnvSuite suite;
  for (std::size_t i = 0; i < n_train; ++i) suite.train.push_back(load_layout(dir / indexed("train", i)));
  for (std::size_t i = 0; i < n_test; ++i) suite.test.push_back(load_layout(dir / indexed("test", i)));
  return suite;
}

}  // namespace oodp::env
