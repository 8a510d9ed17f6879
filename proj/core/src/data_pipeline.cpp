#include "oodp/data_pipeline.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace oodp::data {

std::vector<TransitionRecord> collect(const env::EnvLayout& layout, int n_steps,
                                      std::uint64_t seed, std::int32_t env_id,
                                      const env::Physics& physics) {
  if (n_steps < 1) throw std::invalid_argument("collect: n_steps must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, env::kNumActions - 1);
  env::AgentState state = env::spawn_state(layout, rng());
  env::Image frame = env::render(layout, state);
  std::vector<TransitionRecord> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) {
    const auto action = static_cast<env::Action>(pick(rng));
    const env::AgentState next = env::advance(layout, state, action, physics);
    TransitionRecord r;
    r.frame_t = frame;
    r.action = action;
    r.frame_t1 = next == state ? frame : env::render(layout, next);
    r.pos_t = {static_cast<std::int16_t>(state.u), static_cast<std::int16_t>(state.v)};
    r.pos_t1 = {static_cast<std::int16_t>(next.u), static_cast<std::int16_t>(next.v)};
    r.env_id = env_id;
    frame = r.frame_t1;
    state = next;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TransitionRecord> balance(const std::vector<TransitionRecord>& records,
                                      std::uint64_t seed) {
  std::vector<std::size_t> changed, still;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].changed() ? changed : still).push_back(i);
  if (changed.empty()) throw BalanceError("balance: no changed transitions in input");
  if (still.empty()) throw BalanceError("balance: no changeless transitions in input");
  std::mt19937_64 rng(seed);
  std::shuffle(changed.begin(), changed.end(), rng);
  std::shuffle(still.begin(), still.end(), rng);
  const std::size_t keep = std::min(changed.size(), still.size());
  std::vector<std::size_t> picked(changed.begin(), changed.begin() + static_cast<std::ptrdiff_t>(keep));
  picked.insert(picked.end(), still.begin(), still.begin() + static_cast<std::ptrdiff_t>(keep));
  std::shuffle(picked.begin(), picked.end(), rng);
  std::vector<TransitionRecord> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(records[i]);
  return out;
}

std::size_t ProposalMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

ProposalMask compute_proposal_mask(const env::Image& a, const env::Image& b,
                                   const ProposalOptions& opts) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("compute_proposal_mask: frame shapes differ");
  ProposalMask raw{a.h, a.w, std::vector<std::uint8_t>(static_cast<std::size_t>(a.h * a.w), 0)};
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x) {
      int diff = 0;
      for (int k = 0; k < 3; ++k) diff = std::max(diff, std::abs(int(a.px(y, x)[k]) - int(b.px(y, x)[k])));
      // byte difference scaled to [-1, 1] units
      if (diff / 127.5 > opts.tau) raw.bits[static_cast<std::size_t>(y * a.w + x)] = 1;
    }
  }
  ProposalMask out{a.h, a.w, std::vector<std::uint8_t>(raw.bits.size(), 0)};
  const int r = opts.radius;
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x) {
      if (!raw.bits[static_cast<std::size_t>(y * a.w + x)]) continue;
      for (int yy = std::max(0, y - r); yy <= std::min(a.h - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(a.w - 1, x + r); ++xx)
          out.bits[static_cast<std::size_t>(yy * a.w + xx)] = 1;
    }
  }
  return out;
}

template <typename T>
void image_to_frame(const env::Image& img, Tensor<T>& out, int n) {
  if (out.c() != 3 || out.h() != img.h || out.w() != img.w) {
    throw ShapeError("image_to_frame: target " + to_string(out.shape()));
  }
  for (int c = 0; c < 3; ++c) {
    auto plane = out.plane(n, c);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        plane[static_cast<std::size_t>(y * img.w + x)] = static_cast<T>(img.px(y, x)[c]) / T(127.5) - T(1);
  }
}

template <typename T>
Tensor<T> image_to_frame(const env::Image& img) {
  Tensor<T> out(1, 3, img.h, img.w);
  image_to_frame(img, out, 0);
  return out;
}

template <typename T>
env::Image frame_to_image(const Tensor<T>& frame, int n) {
  env::Image img(frame.h(), frame.w());
  for (int c = 0; c < std::min(3, frame.c()); ++c) {
    auto plane = frame.plane(n, c);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        const double v = (static_cast<double>(plane[static_cast<std::size_t>(y * img.w + x)]) + 1.0) * 127.5;
        img.px(y, x)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  }
  if (frame.c() == 1) {
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) img.px(y, x)[1] = img.px(y, x)[2] = img.px(y, x)[0];
  }
  return img;
}

template void image_to_frame<float>(const env::Image&, Tensor<float>&, int);
template void image_to_frame<double>(const env::Image&, Tensor<double>&, int);
template Tensor<float> image_to_frame<float>(const env::Image&);
template Tensor<double> image_to_frame<double>(const env::Image&);
template env::Image frame_to_image<float>(const Tensor<float>&, int);
template env::Image frame_to_image<double>(const Tensor<double>&, int);

// ----------------------------------------------------------- dataset IO

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

std::size_t record_bytes(int h, int w) {
  return 2 * static_cast<std::size_t>(h) * w * 3 + 1 + 4 * 2 + 4;
}

void put_i16(std::vector<std::uint8_t>& buf, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  buf.push_back(static_cast<std::uint8_t>(u & 0xFF));
  buf.push_back(static_cast<std::uint8_t>(u >> 8));
}

void put_i32(std::vector<std::uint8_t>& buf, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) buf.push_back(static_cast<std::uint8_t>((u >> (8 * k)) & 0xFF));
}

std::int16_t get_i16(const std::uint8_t* p) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
}

std::int32_t get_i32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return static_cast<std::int32_t>(u);
}

}  // namespace

void write_dataset(const std::vector<TransitionRecord>& records, const std::filesystem::path& dir,
                   const std::vector<std::uint64_t>& seeds) {
  std::filesystem::create_directories(dir);
  const int h = records.empty() ? 0 : records.front().frame_t.h;
  const int w = records.empty() ? 0 : records.front().frame_t.w;
  std::vector<std::uint8_t> payload;
  payload.reserve(records.size() * record_bytes(h, w));
  std::set<std::int32_t> env_ids;
  for (const auto& r : records) {
    if (r.frame_t.h != h || r.frame_t.w != w || r.frame_t1.h != h || r.frame_t1.w != w) {
      throw DatasetError("write_dataset: records have mixed frame sizes");
    }
    payload.insert(payload.end(), r.frame_t.rgb.begin(), r.frame_t.rgb.end());
    payload.insert(payload.end(), r.frame_t1.rgb.begin(), r.frame_t1.rgb.end());
    payload.push_back(static_cast<std::uint8_t>(r.action));
    put_i16(payload, r.pos_t[0]);
    put_i16(payload, r.pos_t[1]);
    put_i16(payload, r.pos_t1[0]);
    put_i16(payload, r.pos_t1[1]);
    put_i32(payload, r.env_id);
    env_ids.insert(r.env_id);
  }
  {
    std::ofstream bin(dir / "records.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DatasetError("cannot write " + (dir / "records.bin").string());
    bin.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  }
  std::ofstream man(dir / "manifest.txt", std::ios::trunc);
  if (!man) throw DatasetError("cannot write " + (dir / "manifest.txt").string());
  man << "oodp-dataset " << kDatasetVersion << "\n";
  man << "height " << h << "\nwidth " << w << "\nchannels 3\n";
  man << "num_actions " << env::kNumActions << "\n";
  man << "count " << records.size() << "\n";
  man << "record_bytes " << record_bytes(h, w) << "\n";
  man << "env_ids";
  for (auto id : env_ids) man << " " << id;
  man << "\nseeds";
  for (auto s : seeds) man << " " << s;
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", crc32(payload.data(), payload.size()));
  man << "\ncrc32 " << crc << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.txt");
  if (!man) throw DatasetError("no manifest.txt in " + dir.string());
  Dataset ds;
  std::string line, key;
  int version = -1;
  std::uint32_t want_crc = 0;
  std::size_t rec_bytes = 0;
  bool have_crc = false;
  while (std::getline(man, line)) {
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    if (key == "oodp-dataset") {
      ls >> version;
    } else if (key == "height") {
      ls >> ds.info.height;
    } else if (key == "width") {
      ls >> ds.info.width;
    } else if (key == "num_actions") {
      ls >> ds.info.num_actions;
    } else if (key == "count") {
      ls >> ds.info.count;
    } else if (key == "record_bytes") {
      ls >> rec_bytes;
    } else if (key == "env_ids") {
      std::int32_t id;
      while (ls >> id) ds.info.env_ids.push_back(id);
    } else if (key == "seeds") {
      std::uint64_t s;
      while (ls >> s) ds.info.seeds.push_back(s);
    } else if (key == "crc32") {
      std::string hex;
      ls >> hex;
      want_crc = static_cast<std::uint32_t>(std::stoul(hex, nullptr, 16));
      have_crc = true;
    }
  }
  if (version != kDatasetVersion) {
    throw DatasetVersionError("dataset version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kDatasetVersion) + ")");
  }
  if (!have_crc) throw DatasetError("manifest has no crc32 entry");
  const std::size_t expect_rec = record_bytes(ds.info.height, ds.info.width);
  if (ds.info.count > 0 && rec_bytes != expect_rec) throw DatasetError("manifest record_bytes disagrees with frame size");

  std::ifstream bin(dir / "records.bin", std::ios::binary);
  if (!bin) throw DatasetError("no records.bin in " + dir.string());
  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::size_t want_size = ds.info.count * expect_rec;
  if (payload.size() < want_size) {
    throw DatasetTruncatedError("records.bin holds " + std::to_string(payload.size()) + " bytes, expected " +
                                std::to_string(want_size));
  }
  if (payload.size() > want_size) throw DatasetError("records.bin has trailing bytes");
  if (crc32(payload.data(), payload.size()) != want_crc) throw DatasetChecksumError("records.bin checksum mismatch");

  const int h = ds.info.height, w = ds.info.width;
  const std::size_t frame_bytes = static_cast<std::size_t>(h) * w * 3;
  ds.records.reserve(ds.info.count);
  const std::uint8_t* p = payload.data();
  for (std::size_t i = 0; i < ds.info.count; ++i) {
    TransitionRecord r;
    r.frame_t = env::Image(h, w);
    r.frame_t1 = env::Image(h, w);
    std::memcpy(r.frame_t.rgb.data(), p, frame_bytes);
    p += frame_bytes;
    std::memcpy(r.frame_t1.rgb.data(), p, frame_bytes);
    p += frame_bytes;
    if (*p >= env::kNumActions) throw DatasetError("record " + std::to_string(i) + " has an invalid action");
    r.action = static_cast<env::Action>(*p++);
    r.pos_t = {get_i16(p), get_i16(p + 2)};
    r.pos_t1 = {get_i16(p + 4), get_i16(p + 6)};
    p += 8;
    r.env_id = get_i32(p);
    p += 4;
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace oodp::data
