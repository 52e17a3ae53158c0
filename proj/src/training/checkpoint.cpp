#include "cflow/training/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <variant>

#include "cflow/data/images.hpp"
#include "cflow/errors.hpp"

namespace cflow {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void tensor(const Tensor& t) {
    u64(t.size());
    for (double v : t.data()) f64(v);
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void section(const Writer& inner) {
    u64(inner.out_.size());
    bytes(inner.out_);
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t base, std::string what)
      : bytes_(bytes), base_(base), what_(std::move(what)) {}

  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  void tensor_into(Tensor& t, const std::string& name) {
    const auto n = u64();
    if (n != t.size())
      throw IntegrityError("checkpoint " + what_ + ": " + name + " has " + std::to_string(n) + " values, model expects " +
                           std::to_string(t.size()));
    for (auto& v : t.data()) v = f64();
  }
  Reader section(std::string what) {
    const auto n = u64();
    need(n);
    Reader inner(bytes_.subspan(pos_, n), base_ + pos_, std::move(what));
    pos_ += n;
    return inner;
  }
  std::string text() const { return std::string(bytes_.begin(), bytes_.end()); }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw IntegrityError("checkpoint " + what_ + ": " + std::to_string(bytes_.size() - pos_) + " unexpected bytes at offset " +
                           std::to_string(base_ + pos_));
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_)
      throw IntegrityError("checkpoint " + what_ + ": truncated at offset " + std::to_string(base_ + pos_));
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t base_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const FlowModel& model, const TrainingState& state,
                                            const ConfigMap& extra_config) {
  ConfigMap config = extra_config;
  write_flow_config(model.config(), config);
  const std::string text = format_config_text(config);

  Writer out;
  out.bytes(std::span(reinterpret_cast<const std::uint8_t*>("CFLW"), 4));
  out.u32(kCheckpointVersion);

  Writer cfg;
  cfg.bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  out.section(cfg);

  Writer params;
  params.u64(model.params().size());
  for (const auto& p : model.params()) params.tensor(p.value);
  out.section(params);

  Writer stats;
  std::uint64_t bn_count = 0;
  for (const auto& l : model.layers()) bn_count += std::holds_alternative<BatchNormLayer>(l);
  stats.u64(bn_count);
  for (const auto& l : model.layers())
    if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
      stats.tensor(bn->running_mean());
      stats.tensor(bn->running_var());
    }
  out.section(stats);

  Writer opt;
  opt.u64(state.adam.timestep);
  opt.u64(state.step);
  opt.u64(state.adam.first_moment.size());
  for (std::size_t k = 0; k < state.adam.first_moment.size(); ++k) {
    opt.tensor(state.adam.first_moment[k]);
    opt.tensor(state.adam.second_moment.at(k));
  }
  out.section(opt);

  Writer rng;
  rng.u64(state.rng.state);
  rng.u64(state.rng.inc);
  out.section(rng);

  const std::uint32_t crc = crc32_of(out.data());
  out.u32(crc);
  return std::move(out.data());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12)
    throw IntegrityError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  const std::uint32_t actual = crc32_of(body);
  if (stored != actual) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "checkpoint checksum mismatch (stored %08x, computed %08x)", stored, actual);
    throw IntegrityError(buf);
  }
  if (std::memcmp(body.data(), "CFLW", 4) != 0) throw IntegrityError("not a checkpoint: magic bytes are not CFLW");

  Reader in(body.subspan(4), 4, "header");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (this build reads version " +
                       std::to_string(kCheckpointVersion) + ")");

  Checkpoint ck;
  ck.config = parse_config_text(in.section("config").text());
  ConfigReader reader(ck.config);
  ck.model = std::make_unique<FlowModel>(read_flow_config(reader));
  FlowModel& model = *ck.model;

  Reader params = in.section("parameters");
  const auto count = params.u64();
  if (count != model.params().size())
    throw IntegrityError("checkpoint has " + std::to_string(count) + " parameter tensors, model expects " +
                         std::to_string(model.params().size()));
  for (auto& p : model.params()) params.tensor_into(p.value, p.name);
  params.expect_end();

  Reader stats = in.section("running stats");
  std::size_t bn_count = 0;
  for (const auto& l : model.layers()) bn_count += std::holds_alternative<BatchNormLayer>(l);
  if (stats.u64() != bn_count) throw IntegrityError("checkpoint batch-norm layer count does not match the model");
  for (auto& l : model.layers())
    if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
      stats.tensor_into(bn->running_mean(), "running mean of layer " + std::to_string(bn->index()));
      stats.tensor_into(bn->running_var(), "running variance of layer " + std::to_string(bn->index()));
    }
  stats.expect_end();

  Reader opt = in.section("optimizer");
  ck.state.adam.timestep = opt.u64();
  ck.state.step = opt.u64();
  const auto moments = opt.u64();
  if (moments != 0 && moments != model.params().size())
    throw IntegrityError("checkpoint optimizer state covers " + std::to_string(moments) + " of " +
                         std::to_string(model.params().size()) + " parameters");
  if (moments != 0) {
    const auto timestep = ck.state.adam.timestep;
    ck.state.adam = make_adam_state(model.params());
    ck.state.adam.timestep = timestep;
    for (std::size_t k = 0; k < moments; ++k) {
      opt.tensor_into(ck.state.adam.first_moment[k], "first moment " + std::to_string(k));
      opt.tensor_into(ck.state.adam.second_moment[k], "second moment " + std::to_string(k));
    }
  }
  opt.expect_end();

  Reader rng = in.section("rng");
  ck.state.rng.state = rng.u64();
  ck.state.rng.inc = rng.u64();
  rng.expect_end();
  in.expect_end();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const TrainingState& state,
                     const ConfigMap& extra_config) {
  write_file_atomic(path, encode_checkpoint(model, state, extra_config));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  }
}

}  // namespace cflow
