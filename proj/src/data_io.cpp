#include "stzero/data_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include "stzero/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "storage formats are little-endian");

namespace stzero {

namespace fs = std::filesystem;

SplitSel split_from_string(const std::string& name) {
  if (name == "seen") return SplitSel::Seen;
  if (name == "unseen") return SplitSel::Unseen;
  if (name == "all") return SplitSel::All;
  throw ConfigError("unknown split '" + name + "' (expected seen, unseen, or all)");
}

std::vector<std::size_t> Dataset::gene_indices(SplitSel sel) const {
  std::set<std::string> wanted;
  if (sel == SplitSel::Seen || sel == SplitSel::All)
    wanted.insert(seen.begin(), seen.end());
  if (sel == SplitSel::Unseen || sel == SplitSel::All)
    wanted.insert(unseen.begin(), unseen.end());
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < genes.size(); ++i)
    if (wanted.count(genes[i].gene)) indices.push_back(i);
  return indices;
}

std::size_t Dataset::gene_index(const std::string& name) const {
  for (std::size_t i = 0; i < genes.size(); ++i)
    if (genes[i].gene == name) return i;
  throw LookupError("unknown gene '" + name + "'");
}

const SlideWindows& Dataset::slide(const std::string& slide_id) const {
  for (const SlideWindows& s : slides)
    if (s.slide_id == slide_id) return s;
  throw LookupError("unknown slide '" + slide_id + "'");
}

// ---------------------------------------------------------------------------
// Raw float32 payloads

namespace {

void write_f32(const fs::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  std::vector<float> buf(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.values()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = rows * cols * sizeof(float);
  if (actual != expected) {
    throw DataError("size mismatch in " + path.string() + ": expected " +
                    std::to_string(expected) + " bytes for " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", found " + std::to_string(actual));
  }
  in.seekg(0, std::ios::beg);
  std::vector<float> buf(rows * cols);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("read failed: " + path.string());
  std::vector<double> data(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) data[i] = static_cast<double>(buf[i]);
  Tensor t = Tensor::from_data(rows, cols, std::move(data));
  if (!all_finite(t)) throw DataError("non-finite payload in " + path.string());
  return t;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

constexpr int kFormatVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Dataset load / save

Dataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const nlohmann::json meta = read_json_file(meta_path);
  Dataset ds;
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion)
      throw DataError("unsupported format_version in " + meta_path.string());
    ds.d_e = meta.at("D_e").get<std::size_t>();
    ds.d_t = meta.at("D_T").get<std::size_t>();
    ds.l_max = meta.at("L_max").get<std::size_t>();
    if (ds.d_e == 0 || ds.d_t == 0 || ds.l_max == 0)
      throw DataError("non-positive dimensions in " + meta_path.string());
    ds.seen = meta.at("seen").get<std::vector<std::string>>();
    ds.unseen = meta.at("unseen").get<std::vector<std::string>>();

    std::set<std::string> seen_set(ds.seen.begin(), ds.seen.end());
    std::set<std::string> unseen_set(ds.unseen.begin(), ds.unseen.end());
    for (const std::string& name : seen_set)
      if (unseen_set.count(name))
        throw DataError("overlapping split: gene '" + name + "' is both seen and unseen");

    std::set<std::string> names;
    for (const auto& g : meta.at("genes")) {
      const auto name = g.at("name").get<std::string>();
      const auto len = g.at("len").get<std::size_t>();
      if (!names.insert(name).second)
        throw DataError("duplicate gene '" + name + "' in " + meta_path.string());
      if (len < 1 || len > ds.l_max)
        throw DataError("gene '" + name + "' declares length " + std::to_string(len) +
                        " outside [1, " + std::to_string(ds.l_max) + "]");
      GeneDescription desc;
      desc.gene = name;
      desc.split = seen_set.count(name) ? GeneSplit::Seen : GeneSplit::Unseen;
      if (!seen_set.count(name) && !unseen_set.count(name))
        throw DataError("gene '" + name + "' missing from the seen/unseen split");
      desc.tokens = read_f32(dir / "genes" / name / "desc.f32", len, ds.d_t);
      ds.genes.push_back(std::move(desc));
    }
    for (const std::string& name : seen_set)
      if (!names.count(name)) throw DataError("seen gene '" + name + "' not in gene list");
    for (const std::string& name : unseen_set)
      if (!names.count(name)) throw DataError("unseen gene '" + name + "' not in gene list");
    if (ds.genes.empty()) throw DataError("dataset declares no genes");

    for (const auto& s : meta.at("slides")) {
      const auto id = s.at("id").get<std::string>();
      const auto n = s.at("n").get<std::size_t>();
      if (n < 1) throw DataError("slide '" + id + "' declares no windows");
      SlideWindows slide;
      slide.slide_id = id;
      const fs::path sdir = dir / "slides" / id;
      slide.positions = read_f32(sdir / "positions.f32", n, 2);
      slide.features = read_f32(sdir / "features.f32", n, ds.d_e);
      slide.expression = read_f32(sdir / "expression.f32", n, ds.genes.size());
      ds.slides.push_back(std::move(slide));
    }
    if (ds.slides.empty()) throw DataError("dataset declares no slides");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid meta.json schema in " + meta_path.string() + ": " + e.what());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["format_version"] = kFormatVersion;
  meta["D_e"] = ds.d_e;
  meta["D_T"] = ds.d_t;
  meta["L_max"] = ds.l_max;
  meta["seen"] = ds.seen;
  meta["unseen"] = ds.unseen;
  nlohmann::json genes = nlohmann::json::array();
  for (const GeneDescription& g : ds.genes)
    genes.push_back({{"name", g.gene}, {"len", g.length()}});
  meta["genes"] = genes;
  nlohmann::json slides = nlohmann::json::array();
  for (const SlideWindows& s : ds.slides) slides.push_back({{"id", s.slide_id}, {"n", s.n()}});
  meta["slides"] = slides;

  {
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
  }
  for (const GeneDescription& g : ds.genes) {
    const fs::path gdir = dir / "genes" / g.gene;
    fs::create_directories(gdir);
    write_f32(gdir / "desc.f32", g.tokens);
  }
  for (const SlideWindows& s : ds.slides) {
    const fs::path sdir = dir / "slides" / s.slide_id;
    fs::create_directories(sdir);
    write_f32(sdir / "positions.f32", s.positions);
    write_f32(sdir / "features.f32", s.features);
    write_f32(sdir / "expression.f32", s.expression);
  }
}

// ---------------------------------------------------------------------------
// Planted-model synthesis

void SynthConfig::validate() const {
  if (n_slides < 1 || windows_per_slide < 1 || n_genes < 1 || d_e < 1 || d_t < 1 ||
      desc_len < 1 || d_latent < 1)
    throw ConfigError("synth: all counts and dimensions must be at least 1");
  if (n_seen < 1 || n_seen >= n_genes)
    throw ConfigError("synth: need 1 <= n_seen < n_genes");
  if (noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be non-negative");
}

Dataset synth_dataset(const SynthConfig& cfg, SynthLatents* latents_out) {
  cfg.validate();
  Rng rng(cfg.seed);

  const auto g = static_cast<std::size_t>(cfg.n_genes);
  const auto n = static_cast<std::size_t>(cfg.windows_per_slide);
  const auto dl = static_cast<std::size_t>(cfg.d_latent);
  const auto de = static_cast<std::size_t>(cfg.d_e);
  const auto dt = static_cast<std::size_t>(cfg.d_t);
  const auto len = static_cast<std::size_t>(cfg.desc_len);
  const double latent_scale = 1.0 / std::sqrt(static_cast<double>(dl));

  // Latent gene identities and the fixed observation maps.
  Tensor u = Tensor::zeros(g, dl);
  for (double& v : u.values()) v = rng.normal() * latent_scale;
  Tensor a_map = Tensor::zeros(dl, de);
  for (double& v : a_map.values()) v = rng.normal() * latent_scale;
  Tensor b_map = Tensor::zeros(dl, dt);
  for (double& v : b_map.values()) v = rng.normal() * latent_scale;

  Dataset ds;
  ds.d_e = de;
  ds.d_t = dt;
  ds.l_max = len;

  std::vector<Tensor> window_latents;
  for (int slide_idx = 0; slide_idx < cfg.n_slides; ++slide_idx) {
    SlideWindows slide;
    slide.slide_id = "slide" + std::to_string(slide_idx);
    slide.positions = Tensor::zeros(n, 2);
    for (double& v : slide.positions.values()) v = rng.uniform();

    // Smooth latent field over the slide: each latent dimension is a cosine
    // of a random planar wave of the position, so spatially close windows
    // carry similar latent states.
    Tensor freq = Tensor::zeros(dl, 2);
    std::vector<double> phase(dl);
    const double wave_scale = 2.0 * std::numbers::pi * 1.5;
    for (double& v : freq.values()) v = rng.normal() * wave_scale;
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);

    Tensor s = Tensor::zeros(n, dl);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = slide.positions.values()[i * 2];
      const double y = slide.positions.values()[i * 2 + 1];
      for (std::size_t d = 0; d < dl; ++d) {
        const double arg =
            freq.values()[d * 2] * x + freq.values()[d * 2 + 1] * y + phase[d];
        s.values()[i * dl + d] = std::cos(arg);
      }
    }

    slide.features = Tensor::zeros(n, de);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < de; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dl; ++d)
          acc += s.values()[i * dl + d] * a_map.values()[d * de + j];
        slide.features.values()[i * de + j] = acc + cfg.noise_sigma * rng.normal();
      }

    slide.expression = Tensor::zeros(n, g);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < g; ++c) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dl; ++d)
          acc += s.values()[i * dl + d] * u.values()[c * dl + d];
        slide.expression.values()[i * g + c] = acc + cfg.noise_sigma * rng.normal();
      }

    quantize_to_float32(slide.positions);
    quantize_to_float32(slide.features);
    quantize_to_float32(slide.expression);
    window_latents.push_back(std::move(s));
    ds.slides.push_back(std::move(slide));
  }

  int name_width = 1;
  for (int v = cfg.n_genes - 1; v >= 10; v /= 10) ++name_width;
  for (std::size_t c = 0; c < g; ++c) {
    GeneDescription desc;
    std::string num = std::to_string(c);
    desc.gene = "g" + std::string(static_cast<std::size_t>(name_width) - num.size(), '0') + num;
    desc.split = c < static_cast<std::size_t>(cfg.n_seen) ? GeneSplit::Seen : GeneSplit::Unseen;
    desc.tokens = Tensor::zeros(len, dt);
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t j = 0; j < dt; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dl; ++d)
          acc += u.values()[c * dl + d] * b_map.values()[d * dt + j];
        desc.tokens.values()[l * dt + j] = acc + cfg.noise_sigma * rng.normal();
      }
    quantize_to_float32(desc.tokens);
    (desc.split == GeneSplit::Seen ? ds.seen : ds.unseen).push_back(desc.gene);
    ds.genes.push_back(std::move(desc));
  }

  if (latents_out) {
    latents_out->gene_latents = u;
    latents_out->window_latents = std::move(window_latents);
    latents_out->feature_map = a_map;
    latents_out->token_map = b_map;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kCkptMagic[8] = {'S', 'T', 'Z', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["seed"] = ckpt.seed;
  manifest["config"] = ckpt.config;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors)
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
  manifest["tensors"] = tensors;
  const std::string header = manifest.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kCkptMagic, sizeof(kCkptMagic));
  const std::uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.values()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);

  char magic[sizeof(kCkptMagic)];
  std::uint64_t header_len = 0;
  if (file_size < sizeof(magic) + sizeof(header_len))
    throw CorruptionError("checkpoint too small: " + path.string());
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw CorruptionError("bad checkpoint magic in " + path.string());
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (sizeof(magic) + sizeof(header_len) + header_len > file_size)
    throw CorruptionError("checkpoint manifest overruns file: " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("unparseable checkpoint manifest in " + path.string() + ": " +
                          e.what());
  }

  Checkpoint ckpt;
  std::size_t payload_values = 0;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion)
      throw CorruptionError("unsupported checkpoint version in " + path.string());
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.config = manifest.at("config");
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2)
        throw CorruptionError("tensor '" + name + "' has a non-matrix shape in " +
                              path.string());
      ckpt.tensors.emplace_back(name, Tensor::zeros(shape[0], shape[1]));
      payload_values += shape[0] * shape[1];
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("invalid checkpoint manifest in " + path.string() + ": " +
                          e.what());
  }

  const std::size_t expected =
      sizeof(magic) + sizeof(header_len) + header_len + payload_values * sizeof(float);
  if (file_size != expected) {
    throw CorruptionError("checkpoint payload disagrees with manifest in " + path.string() +
                          ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(file_size));
  }
  for (auto& [name, t] : ckpt.tensors) {
    std::vector<float> buf(t.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw CorruptionError("checkpoint payload truncated in " + path.string());
    for (std::size_t i = 0; i < buf.size(); ++i)
      t.values()[i] = static_cast<double>(buf[i]);
  }
  return ckpt;
}

}  // namespace stzero
