#include "dynlm/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "dynlm/common.hpp"
#include "dynlm/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

namespace dynlm {

namespace {

using nlohmann::json;

class FileWriter {
 public:
  explicit FileWriter(const std::string& path) : path_(path), tmp_(path + ".tmp") {
    f_ = std::fopen(tmp_.c_str(), "wb");
    if (!f_) throw DataError("cannot open for writing: " + path);
  }
  ~FileWriter() {
    if (f_) {
      std::fclose(f_);
      std::remove(tmp_.c_str());
    }
  }
  void write(const void* data, std::size_t len) {
    if (std::fwrite(data, 1, len, f_) != len)
      throw DataError("write failure: " + path_);
  }
  template <typename T>
  void write_value(T v) {
    write(&v, sizeof v);
  }
  // write-temp-then-rename keeps partially written files invisible
  void commit() {
    if (std::fclose(f_) != 0) {
      f_ = nullptr;
      throw DataError("close failure: " + path_);
    }
    f_ = nullptr;
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw DataError("rename failure: " + path_ + ": " + ec.message());
  }

 private:
  std::string path_, tmp_;
  std::FILE* f_ = nullptr;
};

class FileReader {
 public:
  explicit FileReader(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_) throw DataError("cannot open: " + path);
  }
  ~FileReader() {
    if (f_) std::fclose(f_);
  }
  void read(void* data, std::size_t len) {
    if (std::fread(data, 1, len, f_) != len)
      throw DataError("truncated file: " + path_);
  }
  template <typename T>
  T read_value() {
    T v;
    read(&v, sizeof v);
    return v;
  }
  void expect_magic(const char* magic) {
    char got[9] = {0};
    read(got, 8);
    if (std::memcmp(got, magic, 8) != 0)
      throw DataError(std::string("bad magic in ") + path_ + ": expected \"" + magic +
                      "\", found \"" + got + "\"");
  }
  bool at_eof() {
    const int c = std::fgetc(f_);
    if (c == EOF) return true;
    std::ungetc(c, f_);
    return false;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
};

void write_text_file(const std::string& path, const std::string& text) {
  FileWriter w(path);
  w.write(text.data(), text.size());
  w.commit();
}

std::string read_text_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open: " + path);
  std::string out;
  char buf[1 << 14];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, got);
  std::fclose(f);
  return out;
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
}

json system_to_json(const SystemSpec& s) {
  json j;
  j["kind"] = system_kind_name(s.kind);
  switch (s.kind) {
    case SystemKind::lorenz:
      j["sigma"] = s.p[0]; j["rho"] = s.p[1]; j["beta"] = s.p[2];
      break;
    case SystemKind::rossler:
    case SystemKind::henon:
      j["a"] = s.p[0]; j["b"] = s.p[1];
      if (s.kind == SystemKind::rossler) j["c"] = s.p[2];
      break;
  }
  return j;
}

SystemSpec system_from_json(const json& j) {
  const SystemKind kind = system_kind_from_name(j.at("kind").get<std::string>());
  switch (kind) {
    case SystemKind::lorenz:
      return SystemSpec::lorenz(j.at("sigma"), j.at("rho"), j.at("beta"));
    case SystemKind::rossler:
      return SystemSpec::rossler(j.at("a"), j.at("b"), j.at("c"));
    case SystemKind::henon:
      return SystemSpec::henon(j.at("a"), j.at("b"));
  }
  throw DataError("unknown system kind");
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab", c.vocab},     {"context", c.context},
              {"dim", c.dim},         {"layers", c.layers},
              {"heads", c.heads},     {"dropout", c.dropout},
              {"tie_embeddings", c.tie_embeddings},
              {"sinusoidal_positions", c.sinusoidal_positions}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab = j.at("vocab");
  c.context = j.at("context");
  c.dim = j.at("dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.dropout = j.value("dropout", 0.1);
  c.tie_embeddings = j.value("tie_embeddings", true);
  c.sinusoidal_positions = j.value("sinusoidal_positions", false);
  return c;
}

}  // namespace

void save_trajectories(const std::string& path, const Dataset& dataset) {
  FileWriter w(path);
  w.write("DYNTRAJ1", 8);
  const std::uint32_t dim =
      dataset.trajectories.empty() ? std::uint32_t(dataset.system.dim())
                                   : std::uint32_t(dataset.trajectories.front().dim);
  w.write_value<std::uint32_t>(dim);
  w.write_value<std::uint32_t>(std::uint32_t(dataset.trajectories.size()));
  for (const auto& t : dataset.trajectories) {
    if (std::uint32_t(t.dim) != dim)
      throw DataError("save_trajectories: mixed trajectory dimensions");
    w.write_value<std::uint64_t>(t.length());
    w.write_value<double>(t.tau);
    w.write(t.states.data(), t.states.size() * sizeof(double));
  }
  w.commit();

  json meta;
  meta["format"] = "trajectory-meta-v1";
  meta["system"] = system_to_json(dataset.system);
  meta["split"] = dataset.split;
  meta["seed"] = dataset.seed;
  meta["tau"] = dataset.tau;
  meta["rng"] = Rng::kAlgorithm;
  meta["first_state_is_x0"] = true;
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

Dataset load_trajectories(const std::string& path) {
  FileReader r(path);
  r.expect_magic("DYNTRAJ1");
  const auto dim = r.read_value<std::uint32_t>();
  const auto count = r.read_value<std::uint32_t>();
  if (dim == 0 || dim > 8) throw DataError("bad dimension in " + path);
  Dataset ds;
  ds.trajectories.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Trajectory t;
    t.dim = int(dim);
    const auto len = r.read_value<std::uint64_t>();
    t.tau = r.read_value<double>();
    t.states.resize(len * dim);
    r.read(t.states.data(), t.states.size() * sizeof(double));
    ds.trajectories.push_back(std::move(t));
  }
  if (!r.at_eof()) throw DataError("trailing bytes in " + path);
  if (!ds.trajectories.empty()) ds.tau = ds.trajectories.front().tau;

  const std::string meta_path = path + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    const json meta = parse_json_file(meta_path);
    ds.system = system_from_json(meta.at("system"));
    ds.split = meta.value("split", "train");
    ds.seed = meta.value("seed", std::uint64_t(0));
    ds.tau = meta.value("tau", ds.tau);
  }
  return ds;
}

void save_tokens(const std::string& path, const TokenData& tokens) {
  FileWriter w(path);
  w.write("DYNTOK01", 8);
  w.write_value<std::uint32_t>(tokens.vocab);
  w.write_value<std::uint32_t>(std::uint32_t(tokens.sequences.size()));
  for (const auto& seq : tokens.sequences) {
    w.write_value<std::uint64_t>(seq.size());
    w.write(seq.data(), seq.size() * sizeof(TokenId));
  }
  w.commit();
}

TokenData load_tokens(const std::string& path) {
  FileReader r(path);
  r.expect_magic("DYNTOK01");
  TokenData td;
  td.vocab = r.read_value<std::uint32_t>();
  const auto count = r.read_value<std::uint32_t>();
  td.sequences.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.read_value<std::uint64_t>();
    std::vector<TokenId> seq(len);
    r.read(seq.data(), len * sizeof(TokenId));
    for (TokenId t : seq) {
      if (t >= td.vocab)
        throw DataError("token id " + std::to_string(t) + " >= vocabulary " +
                        std::to_string(td.vocab) + " in " + path);
    }
    td.sequences.push_back(std::move(seq));
  }
  if (!r.at_eof()) throw DataError("trailing bytes in " + path);
  return td;
}

void save_grid(const std::string& path, const Grid& grid) {
  json j;
  j["format"] = "grid-v1";
  j["dim"] = grid.dim;
  j["n"] = grid.n;
  j["lo"] = grid.lo;
  j["hi"] = grid.hi;
  j["flattening"] = "dimension-0-most-significant";
  write_text_file(path, j.dump(2) + "\n");
}

Grid load_grid(const std::string& path) {
  const json j = parse_json_file(path);
  if (j.value("format", "") != "grid-v1")
    throw DataError("not a grid file (want format grid-v1): " + path);
  Grid g;
  g.dim = j.at("dim");
  g.n = j.at("n");
  g.lo = j.at("lo").get<std::vector<double>>();
  g.hi = j.at("hi").get<std::vector<double>>();
  if (int(g.lo.size()) != g.dim || int(g.hi.size()) != g.dim)
    throw DataError("grid bounds do not match dim in " + path);
  for (int i = 0; i < g.dim; ++i) {
    if (!(g.lo[i] < g.hi[i])) throw DataError("grid has empty extent in " + path);
  }
  if (g.n < 1) throw DataError("grid has n < 1 in " + path);
  return g;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["format"] = "checkpoint-v1";
  header["config"] = config_to_json(ckpt.params.config);
  header["step"] = ckpt.step;
  header["seed"] = ckpt.seed;
  const std::string header_text = header.dump();

  FileWriter w(path);
  w.write("DYNCKPT1", 8);
  w.write_value<std::uint32_t>(1u);
  w.write_value<std::uint64_t>(header_text.size());
  w.write(header_text.data(), header_text.size());
  w.write_value<std::uint32_t>(std::uint32_t(ckpt.params.tensors.size()));
  for (const auto& t : ckpt.params.tensors) {
    w.write_value<std::uint16_t>(std::uint16_t(t.name.size()));
    w.write(t.name.data(), t.name.size());
    w.write_value<std::uint8_t>(0);  // dtype 0 = f64
    w.write_value<std::uint8_t>(std::uint8_t(t.shape.size()));
    for (auto s : t.shape) w.write_value<std::uint32_t>(s);
    w.write_value<std::uint64_t>(t.data.size() * sizeof(double));
    w.write(t.data.data(), t.data.size() * sizeof(double));
  }
  w.commit();
}

Checkpoint load_checkpoint(const std::string& path) {
  FileReader r(path);
  r.expect_magic("DYNCKPT1");
  const auto version = r.read_value<std::uint32_t>();
  if (version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(version) +
                    " in " + path);
  const auto header_len = r.read_value<std::uint64_t>();
  std::string header_text(header_len, '\0');
  r.read(header_text.data(), header_len);
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.params.config = config_from_json(header.at("config"));
  ckpt.params.config.validate();
  ckpt.step = header.value("step", std::uint64_t(0));
  ckpt.seed = header.value("seed", std::uint64_t(0));

  // expected layout for this config, used to validate names and shapes
  ParameterSet expected = zero_like(init_model(ckpt.params.config, 0));

  const auto tensor_count = r.read_value<std::uint32_t>();
  if (tensor_count != expected.tensors.size())
    throw DataError("checkpoint tensor count " + std::to_string(tensor_count) +
                    " does not match config (want " +
                    std::to_string(expected.tensors.size()) + ") in " + path);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const auto name_len = r.read_value<std::uint16_t>();
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    const auto dtype = r.read_value<std::uint8_t>();
    if (dtype != 0) throw DataError("unsupported tensor dtype in " + path);
    const auto ndim = r.read_value<std::uint8_t>();
    std::vector<std::uint32_t> shape(ndim);
    for (auto& s : shape) s = r.read_value<std::uint32_t>();
    const auto byte_len = r.read_value<std::uint64_t>();

    Tensor& slot = expected.tensors[i];
    if (slot.name != name)
      throw DataError("checkpoint tensor \"" + name + "\" out of order (want \"" +
                      slot.name + "\") in " + path);
    if (slot.shape != shape)
      throw DataError("shape mismatch for tensor \"" + name + "\" in " + path);
    if (byte_len != slot.numel() * sizeof(double))
      throw DataError("payload size mismatch for tensor \"" + name + "\" in " + path);
    slot.data.resize(slot.numel());
    r.read(slot.data.data(), byte_len);
  }
  if (!r.at_eof()) throw DataError("trailing bytes in " + path);
  ckpt.params.tensors = std::move(expected.tensors);
  return ckpt;
}

std::string describe_file(const std::string& path) {
  FileReader r(path);
  char magic[9] = {0};
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open: " + path);
    const std::size_t got = std::fread(magic, 1, 8, f);
    std::fclose(f);
    magic[got] = '\0';
  }
  std::string out;
  if (std::memcmp(magic, "DYNTRAJ1", 8) == 0) {
    const Dataset ds = load_trajectories(path);
    out = "trajectory file: " + std::to_string(ds.trajectories.size()) +
          " trajectories, dim " +
          std::to_string(ds.trajectories.empty() ? 0 : ds.trajectories.front().dim) +
          ", " + std::to_string(ds.total_states()) + " states, tau " +
          std::to_string(ds.tau) + ", system " + system_kind_name(ds.system.kind) +
          ", split " + ds.split;
  } else if (std::memcmp(magic, "DYNTOK01", 8) == 0) {
    const TokenData td = load_tokens(path);
    out = "token file: vocabulary " + std::to_string(td.vocab) + ", " +
          std::to_string(td.sequences.size()) + " sequences, " +
          std::to_string(td.total_tokens()) + " tokens";
  } else if (std::memcmp(magic, "DYNCKPT1", 8) == 0) {
    const Checkpoint c = load_checkpoint(path);
    const auto& cfg = c.params.config;
    out = "checkpoint: step " + std::to_string(c.step) + ", vocab " +
          std::to_string(cfg.vocab) + ", context " + std::to_string(cfg.context) +
          ", dim " + std::to_string(cfg.dim) + ", layers " +
          std::to_string(cfg.layers) + ", heads " + std::to_string(cfg.heads) +
          ", parameters " + std::to_string(c.params.total_parameters());
  } else if (magic[0] == '{') {
    const json j = parse_json_file(path);
    out = "structured text (" + j.value("format", std::string("unversioned")) + "): " +
          j.dump().substr(0, 200);
  } else {
    throw DataError("unrecognized file format: " + path);
  }
  return out;
}

}  // namespace dynlm
