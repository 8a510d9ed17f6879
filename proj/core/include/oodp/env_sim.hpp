#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oodp::env {

enum class Variant : std::uint8_t { Platform, Mars };

enum class Cell : std::uint8_t { Free, Wall, Ladder, Flat, Rock };

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3, Noop = 4 };
inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Up, Action::Down, Action::Left,
                                                             Action::Right, Action::Noop};

const char* to_string(Action a);
const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

/// One-hot action code a ∈ {0,1}^n_a.
template <typename T>
std::array<T, kNumActions> one_hot(Action a) {
  std::array<T, kNumActions> v{};
  v[static_cast<int>(a)] = T(1);
  return v;
}

/// Movement constants. The sprite is one tile.
struct Physics {
  int step_px = 2;
  int fall_px = 3;
  double max_slope_deg = 5.0;
};

/// Grid of cells, row-major. Rendered frames are (grid_h * tile_px) ×
/// (grid_w * tile_px). For the Mars variant `elevation_deg` holds the
/// per-cell slope angle that decided ROCK vs FLAT at generation time.
struct EnvLayout {
  Variant variant = Variant::Platform;
  int grid_h = 10;
  int grid_w = 10;
  int tile_px = 8;
  int palette = 0;
  std::uint64_t seed = 0;
  std::vector<Cell> cells;
  std::vector<double> elevation_deg;

  [[nodiscard]] Cell at(int row, int col) const { return cells[row * grid_w + col]; }
  Cell& at(int row, int col) { return cells[row * grid_w + col]; }
  [[nodiscard]] int height_px() const { return grid_h * tile_px; }
  [[nodiscard]] int width_px() const { return grid_w * tile_px; }
  [[nodiscard]] bool same_grid(const EnvLayout& o) const {
    return grid_h == o.grid_h && grid_w == o.grid_w && cells == o.cells;
  }
  friend bool operator==(const EnvLayout&, const EnvLayout&) = default;
};

/// Builds an empty layout: border cells blocked, everything else open.
EnvLayout make_empty_layout(Variant variant, int grid_h, int grid_w, int tile_px = 8);

enum class Mode : std::uint8_t { Grounded, OnLadder, Airborne };

/// Top-left pixel (u = row, v = column) of the agent sprite.
struct AgentState {
  int u = 0;
  int v = 0;
  Mode mode = Mode::Grounded;
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Derives the vertical mode flag of a position.
Mode classify(const EnvLayout& layout, int u, int v);
AgentState make_state(const EnvLayout& layout, int u, int v);

/// True when the sprite box at (u, v) leaves the frame or overlaps a
/// blocking cell (WALL, or ROCK in the Mars variant).
bool blocked(const EnvLayout& layout, int u, int v);
bool overlaps(const EnvLayout& layout, int u, int v, Cell kind);
bool is_valid_state(const EnvLayout& layout, const AgentState& s);

/// Platform physics. Airborne agents fall by min(fall_px, distance to
/// support) and ignore the action; otherwise up/down climb ladders and
/// left/right move up to step_px until blocked.
AgentState step(const EnvLayout& layout, const AgentState& state, Action action,
                const Physics& physics = {});

/// Mars physics: moves step_px in the action direction unless the
/// destination box leaves the frame or touches a ROCK cell.
AgentState step_mars(const EnvLayout& layout, const AgentState& state, Action action,
                     const Physics& physics = {});

/// Dispatches on layout.variant.
AgentState advance(const EnvLayout& layout, const AgentState& state, Action action,
                   const Physics& physics = {});

/// Packed H×W×3 RGB image.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int height, int width) : h(height), w(width), rgb(static_cast<std::size_t>(height) * width * 3) {}
  std::uint8_t* px(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
  [[nodiscard]] const std::uint8_t* px(int y, int x) const {
    return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Frame with only the layout drawn (no agent).
Image render_background(const EnvLayout& layout);
Image render(const EnvLayout& layout, const AgentState& state);
/// Per-pixel ground-truth cell kind (the privileged segmentation).
std::vector<Cell> cell_map(const EnvLayout& layout);

// ------------------------------------------------------------ generation

struct LayoutSpec {
  Variant variant = Variant::Platform;
  int grid_h = 10;
  int grid_w = 10;
  int tile_px = 8;
  int palette = 0;
  // platform variant
  int min_platforms = 1;
  int max_platforms = 2;
  int min_blocks = 0;
  int max_blocks = 3;
  // mars variant: fraction of interior cells that are ROCK
  double min_rock_fraction = 0.12;
  double max_rock_fraction = 0.35;
  int max_retries = 2000;
};

struct EnvSuite {
  std::vector<EnvLayout> train;
  std::vector<EnvLayout> test;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One layout accepted by rejection sampling (reachability checked).
EnvLayout generate_layout(const LayoutSpec& spec, std::uint64_t seed);

/// k training and m testing layouts, pairwise distinct, deterministic in seed.
EnvSuite generate_env_suite(int k, int m, std::uint64_t seed, const LayoutSpec& spec = {});

/// All positions reachable from `start` under the variant's physics.
std::vector<AgentState> reachable_states(const EnvLayout& layout, const AgentState& start,
                                         const Physics& physics = {});

/// Deterministic spawn: a resting position on the bottom floor (platform)
/// or an open tile (Mars), chosen by seed among valid candidates.
AgentState spawn_state(const EnvLayout& layout, std::uint64_t seed);

// ------------------------------------------------------------- layout IO

class LayoutFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_layout(const EnvLayout& layout);
EnvLayout parse_layout(const std::string& text);
void save_layout(const EnvLayout& layout, const std::filesystem::path& path);
EnvLayout load_layout(const std::filesystem::path& path);

/// Writes train_XX.layout / test_XX.layout files plus suite.txt.
void save_suite(const EnvSuite& suite, const std::filesystem::path& dir);
EnvSuite load_suite(const std::filesystem::path& dir);

}  // namespace oodp::env
