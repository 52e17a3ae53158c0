#include "cflow/flow/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "cflow/errors.hpp"

namespace cflow {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

IndexList make_index_list(std::vector<std::size_t> v) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(v));
}

IndexList iota_list(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return make_index_list(std::move(v));
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

std::string layer_description(const FlowLayer& layer) {
  return std::visit(Overloaded{
                        [](const CouplingLayer& l) {
                          return "coupling(" + std::string(mask_kind_name(l.mask().kind)) +
                                 ", phase " + std::to_string(l.mask().phase) + ") on " + l.mask().shape.to_string();
                        },
                        [](const BatchNormLayer& l) { return "batchnorm(" + std::to_string(l.dims()) + ")"; },
                        [](const SqueezeLayer& l) { return "squeeze on " + l.input.to_string(); },
                        [](const FactorOutLayer& l) { return "factor-out on " + l.input.to_string(); },
                    },
                    layer);
}

FlowModel::FlowModel(const FlowConfig& config) : config_(config) {
  if (config.input.volume() < 2) throw ConfigError("flow input must have at least two coordinates");
  if (config.coupling_layers == 0) throw ConfigError("coupling_layers must be positive");

  Pcg32 init_rng(config.init_seed, 0x1f1a);
  ImageShape shape = config.input;
  std::vector<std::size_t> active(shape.volume());
  std::iota(active.begin(), active.end(), 0);
  std::size_t phase = 0;

  auto begin_layer = [&] {
    shapes_.push_back(shape);
    active_to_input_.push_back(active);
    return layers_.size();
  };
  auto fail = [&](std::size_t index, const std::string& what, const ConfigError& e) {
    throw ConfigError("infeasible schedule at layer " + std::to_string(index) + " (" + what + "): " + e.what());
  };

  auto add_coupling = [&](MaskKind kind) {
    const std::size_t index = begin_layer();
    try {
      layers_.emplace_back(CouplingLayer(index, make_mask(kind, shape, phase++), config.stnet, params_, init_rng));
    } catch (const ConfigError& e) {
      shapes_.pop_back();
      active_to_input_.pop_back();
      fail(index, "coupling, " + std::string(mask_kind_name(kind)), e);
    }
    if (config.batchnorm) {
      const std::size_t bn = begin_layer();
      layers_.emplace_back(BatchNormLayer(bn, shape.volume(), params_, config.bn_momentum, config.bn_eps));
    }
  };
  auto add_squeeze = [&] {
    const std::size_t index = layers_.size();
    ImageShape next;
    try {
      next = squeezed_shape(shape);
    } catch (const ConfigError& e) {
      fail(index, "squeeze", e);
    }
    begin_layer();
    auto perm = squeeze_permutation(shape);
    std::vector<std::size_t> moved(active.size());
    for (std::size_t k = 0; k < perm.size(); ++k) moved[k] = active[perm[k]];
    layers_.emplace_back(SqueezeLayer{index, shape, make_index_list(perm), make_index_list(invert_permutation(perm))});
    active = std::move(moved);
    shape = next;
  };
  auto add_factor_out = [&] {
    const std::size_t index = layers_.size();
    if (shape.c < 2 || shape.c % 2 != 0)
      fail(index, "factor-out", ConfigError("channel count " + std::to_string(shape.c) + " on " + shape.to_string() +
                                            " cannot be halved"));
    begin_layer();
    const std::size_t cut = (shape.c / 2) * shape.h * shape.w;
    layers_.emplace_back(FactorOutLayer{index, shape, iota_list(0, cut), iota_list(cut, shape.volume())});
    latent_to_input_.insert(latent_to_input_.end(), active.begin(), active.begin() + static_cast<std::ptrdiff_t>(cut));
    active.erase(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(cut));
    shape = ImageShape{shape.c / 2, shape.h, shape.w};
  };

  if (config.scales == 0) {
    for (std::size_t k = 0; k < config.coupling_layers; ++k) add_coupling(config.mask);
  } else {
    for (std::size_t s = 0; s < config.scales; ++s) {
      for (std::size_t k = 0; k < config.coupling_layers; ++k) add_coupling(config.mask);
      add_squeeze();
      for (std::size_t k = 0; k < config.coupling_layers; ++k) add_coupling(MaskKind::kChannelwise);
      if (s + 1 < config.scales) add_factor_out();
    }
  }
  shapes_.push_back(shape);
  active_to_input_.push_back(active);
  latent_to_input_.insert(latent_to_input_.end(), active.begin(), active.end());
}

std::size_t FlowModel::coupling_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += std::holds_alternative<CouplingLayer>(l);
  return n;
}

std::size_t FlowModel::squeeze_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += std::holds_alternative<SqueezeLayer>(l);
  return n;
}

std::size_t FlowModel::factor_out_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += std::holds_alternative<FactorOutLayer>(l);
  return n;
}

std::vector<std::size_t> FlowModel::latent_block_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& l : layers_)
    if (const auto* f = std::get_if<FactorOutLayer>(&l)) sizes.push_back(f->factored->size());
  sizes.push_back(shapes_.back().volume());
  return sizes;
}

LatentPass FlowModel::to_latent(const ParamBinder& bind, Var x, BnMode mode, bool record_couplings) const {
  Tape& t = bind.tape();
  const Tensor& xv = t.value(x);
  if (xv.cols() != dims())
    throw ContractViolation("flow expects " + std::to_string(dims()) + " coordinates per example, got " +
                            std::to_string(xv.cols()));
  LatentPass pass;
  Var h = x;
  Var logdet = t.constant(Tensor::matrix(xv.rows(), 1));
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const CouplingLayer& l) {
                     auto r = l.apply(bind, h, Direction::kToLatent);
                     h = r.y;
                     logdet = t.add(logdet, r.logdet);
                     if (record_couplings) pass.couplings.push_back({l.index(), r.y, r.s, r.t, pass.factored.size()});
                   },
                   [&](const BatchNormLayer& l) {
                     auto r = l.apply(bind, h, Direction::kToLatent, mode);
                     h = r.y;
                     logdet = t.add_broadcast(logdet, r.logdet);
                     if (mode == BnMode::kTrain) pass.batch_stats.push_back(std::move(r.stats));
                   },
                   [&](const SqueezeLayer& l) { h = t.gather(h, l.forward); },
                   [&](const FactorOutLayer& l) {
                     pass.factored.push_back(t.gather(h, l.factored));
                     h = t.gather(h, l.kept);
                   },
               },
               layer);
  }
  pass.final = h;
  pass.logdet = logdet;

  Tape::Scope scope(t, "base distribution");
  Var base = t.constant(Tensor::matrix(xv.rows(), 1));
  auto add_piece = [&](Var piece) {
    const double d = static_cast<double>(t.value(piece).cols());
    base = t.add(base, t.add_scalar(t.scale(t.sum_cols(t.square(piece)), -0.5), -d * kHalfLog2Pi));
  };
  for (Var piece : pass.factored) add_piece(piece);
  add_piece(pass.final);
  pass.base_logprob = base;
  pass.logprob = t.add(base, logdet);
  return pass;
}

std::vector<double> FlowModel::log_prob(const Tensor& x, BnMode mode) const {
  Tape tape;
  ParamBinder bind(tape, params_);
  auto pass = to_latent(bind, tape.constant(x), mode);
  const Tensor& lp = tape.value(pass.logprob);
  return {lp.data().begin(), lp.data().end()};
}

Tensor FlowModel::log_det(const Tensor& x, BnMode mode) const {
  Tape tape;
  ParamBinder bind(tape, params_);
  return tape.value(to_latent(bind, tape.constant(x), mode).logdet);
}

Tensor FlowModel::latent(const Tensor& x, BnMode mode) const {
  Tape tape;
  ParamBinder bind(tape, params_);
  auto pass = to_latent(bind, tape.constant(x), mode);
  Var z = pass.final;
  for (std::size_t k = pass.factored.size(); k-- > 0;) z = tape.concat(pass.factored[k], z);
  return tape.value(z);
}

Tensor FlowModel::to_data(const Tensor& z) const {
  if (z.cols() != dims())
    throw ContractViolation("latent batch needs " + std::to_string(dims()) + " columns, got " + std::to_string(z.cols()));
  Tape tape;
  ParamBinder bind(tape, params_);
  Var all = tape.constant(z);

  const auto sizes = latent_block_sizes();
  std::vector<Var> pieces;
  std::size_t offset = 0;
  for (auto size : sizes) {
    pieces.push_back(tape.gather(all, iota_list(offset, offset + size)));
    offset += size;
  }
  Var h = pieces.back();
  std::size_t next_piece = pieces.size() - 1;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    std::visit(Overloaded{
                   [&](const CouplingLayer& l) { h = l.apply(bind, h, Direction::kToData).y; },
                   [&](const BatchNormLayer& l) { h = l.apply(bind, h, Direction::kToData, BnMode::kEval).y; },
                   [&](const SqueezeLayer& l) { h = tape.gather(h, l.inverse); },
                   [&](const FactorOutLayer&) { h = tape.concat(pieces[--next_piece], h); },
               },
               *it);
  }
  return tape.value(h);
}

void FlowModel::update_running_stats(const std::vector<BatchStats>& stats) {
  std::size_t k = 0;
  for (auto& layer : layers_)
    if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      if (k >= stats.size()) throw ContractViolation("update_running_stats: fewer batch stats than batch-norm layers");
      bn->update_running(stats[k++]);
    }
  if (k != stats.size()) throw ContractViolation("update_running_stats: more batch stats than batch-norm layers");
}

void FlowModel::randomize(Pcg32& rng, double scale) {
  for (auto& p : params_)
    for (auto& v : p.value.data()) v = scale * (2.0 * rng.uniform() - 1.0);
}

Tensor standard_normal_logprob(const Tensor& z) {
  Tensor out = Tensor::matrix(z.rows(), 1);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (double v : z.row(r)) s += v * v;
    out[r] = -0.5 * s - static_cast<double>(z.cols()) * kHalfLog2Pi;
  }
  return out;
}

Tensor flow_sample(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  Pcg32 rng(seed, 0x5a3e);
  Tensor z = Tensor::matrix(n, model.dims());
  rng.fill_normal(z.data());
  return model.to_data(z);
}

}  // namespace cflow
