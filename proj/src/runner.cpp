#include "fedsim/runner.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/blockfl.hpp"
#include "fedsim/datagen.hpp"
#include "fedsim/evt.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::runner {
namespace {

using config::ExperimentConfig;
using config::ProtocolKind;
using federation::DeviceState;
using federation::MsiMessage;
using federation::RoundMsi;
using metrics::MetricsRecord;
using vec::Vec;

void quantize_message(MsiMessage& m, int levels) {
  using federation::MsiKind;
  int bits = netsim::quantized_element_bits(levels);
  if (m.kind == MsiKind::kLogitTable || m.kind == MsiKind::kJacobianTable) {
    // One shared range across the present rows keeps the codebook per message.
    std::vector<double> flat;
    for (int l = 0; l < m.table.label_count; ++l) {
      if (!m.table.present(l)) continue;
      auto row = m.table.row(l);
      flat.insert(flat.end(), row.begin(), row.end());
    }
    auto q = netsim::quantize_uniform(flat, levels);
    std::size_t pos = 0;
    for (int l = 0; l < m.table.label_count; ++l) {
      if (!m.table.present(l)) continue;
      auto row = m.table.row(l);
      for (auto& v : row) v = q.values[pos++];
    }
  } else {
    m.values = netsim::quantize_uniform(m.values, levels).values;
  }
  m.element_bits = bits;
}

struct Run {
  const ExperimentConfig& cfg;
  datagen::Dataset train;
  datagen::Dataset test;
  nn::Batch train_eval;
  nn::Batch test_eval;
  std::vector<DeviceState> devices;
  federation::Hooks hooks;
  std::mt19937_64 dp_rng;
  std::mt19937_64 price_rng;
  std::vector<std::mt19937_64> batch_rngs;
  int quant_levels = 0;

  explicit Run(const ExperimentConfig& c)
      : cfg(c), dp_rng(make_rng(c.seed, "dp.noise")), price_rng(make_rng(c.seed, "netsim.price")) {}

  void setup_data() {
    if (!cfg.data.csv_path.empty()) {
      train = datagen::load_csv(cfg.data.csv_path);
      test = train;  // CSV runs evaluate on the training set
    } else {
      train = datagen::gen_blobs(cfg.data.labels, cfg.data.per_class, cfg.data.dim,
                                 cfg.data.separation, cfg.seed, 0);
      test = datagen::gen_blobs(cfg.data.labels, cfg.data.test_per_class, cfg.data.dim,
                                cfg.data.separation, cfg.seed, 1);
    }
    train_eval = train.full_batch();
    test_eval = test.full_batch();

    datagen::PartitionPlan plan =
        cfg.data.partition == config::PartitionMode::kIid
            ? datagen::partition_iid(train, cfg.devices, cfg.seed)
            : datagen::partition_label_skew(train, cfg.devices, cfg.data.labels_per_device,
                                            cfg.seed);
    if (cfg.data.p_share > 0.0) plan = datagen::share_fraction(train, plan, cfg.data.p_share, cfg.seed);

    auto init_rng = make_rng(cfg.seed, "nn.init");
    nn::ParamVector init = nn::init_params(cfg.model, init_rng);
    devices.resize(cfg.devices);
    for (int i = 0; i < cfg.devices; ++i) {
      devices[i].id = i;
      devices[i].params = init;
      devices[i].shard = plan.assignments[i];
    }
    for (int i = 0; i < cfg.devices; ++i)
      batch_rngs.push_back(make_rng(cfg.seed, "nn.batch", static_cast<std::uint64_t>(i)));
  }

  void setup_hooks() {
    hooks.element_bits = cfg.element_bits;
    quant_levels = 0;
    if (cfg.quantization.enabled) {
      quant_levels = cfg.quantization.levels > 0
                         ? cfg.quantization.levels
                         : netsim::max_quantization_levels(cfg.links.capacity_bits_per_sample);
    }
    bool dp_active = cfg.dp.noise_sigma > 0.0 || cfg.dp.clip_norm > 0.0;
    int levels = quant_levels;
    if (levels > 0 || dp_active) {
      privacy::DpConfig dp = cfg.dp;
      hooks.up = [this, levels, dp_active, dp](MsiMessage& m) {
        if (levels > 0) quantize_message(m, levels);
        if (dp_active) privacy::gaussian_mechanism(m, dp, dp_rng);
      };
    }
    if (quant_levels > 0 && cfg.quantization.downlink) {
      int levels_down = quant_levels;
      hooks.down = [levels_down](MsiMessage& m) { quantize_message(m, levels_down); };
    }
  }

  std::vector<std::vector<int>> draw_batches() {
    std::vector<std::vector<int>> batches(cfg.devices);
    for (int i = 0; i < cfg.devices; ++i) {
      const auto& shard = devices[i].shard;
      int want = cfg.hyper.batch_size;
      if (want <= 0 || want >= static_cast<int>(shard.size())) {
        batches[i] = shard;
      } else {
        std::sample(shard.begin(), shard.end(), std::back_inserter(batches[i]), want,
                    batch_rngs[i]);
      }
    }
    return batches;
  }

  federation::GradFn grad_on(const std::vector<std::vector<int>>& batches) {
    return [this, &batches](int device, const Vec& at) {
      nn::Batch b = train.batch_of(batches[device]);
      return nn::loss_and_grad(cfg.model, at, b);
    };
  }

  federation::GradFn grad_full_shard() {
    return [this](int device, const Vec& at) {
      nn::Batch b = train.batch_of(devices[device].shard);
      return nn::loss_and_grad(cfg.model, at, b);
    };
  }

  Vec mean_params() const {
    std::vector<Vec> all;
    all.reserve(devices.size());
    for (const auto& d : devices) all.push_back(d.params);
    return vec::mean_of(all);
  }
};

RunResult run_extfl(const ExperimentConfig& cfg) {
  const config::EvtRunConfig& ec = *cfg.evt;
  auto queues =
      evt::simulate_queues(cfg.devices, ec.arrival_rate, ec.service_rate, ec.horizon, cfg.seed);
  std::vector<evt::ExceedanceSet> sets;
  for (int i = 0; i < cfg.devices; ++i)
    sets.push_back(evt::exceedances(queues.traces[i], ec.threshold, i));

  std::vector<double> pooled;
  for (const auto& s : sets) pooled.insert(pooled.end(), s.samples.begin(), s.samples.end());
  if (pooled.empty()) throw std::invalid_argument("extfl: no queue exceedances above threshold");

  evt::GpdParams global{ec.init_sigma, ec.init_xi};
  auto price_rng = make_rng(cfg.seed, "netsim.price");
  RunResult out;
  double sim_time = 0.0;
  std::uint64_t bits_up = 0, bits_down = 0;
  for (int k = 1; k <= cfg.rounds; ++k) {
    RoundMsi msi;
    for (int i = 0; i < cfg.devices; ++i) {
      if (sets[i].samples.empty()) continue;
      evt::LoglikGrad g = evt::gpd_loglik_grad(sets[i].samples, global);
      MsiMessage m;
      m.origin = i;
      m.kind = federation::MsiKind::kGpdGradient;
      m.element_bits = cfg.element_bits;
      m.values = {g.d_sigma, g.d_xi, global.sigma, global.xi,
                  static_cast<double>(sets[i].samples.size())};
      msi.up.push_back(std::move(m));
    }
    global = evt::federated_gpd_round(sets, global, ec.lr);
    MsiMessage down;
    down.origin = -1;
    down.kind = federation::MsiKind::kGpdGradient;
    down.element_bits = cfg.element_bits;
    down.values = {0.0, 0.0, global.sigma, global.xi, static_cast<double>(pooled.size())};
    msi.down.push_back(std::move(down));

    auto timing = netsim::price_round(msi, netsim::Split::kHelperDevice, cfg.devices, cfg.links,
                                      cfg.compute, price_rng);
    sim_time += timing.total_s;
    for (const auto& m : msi.up) bits_up += netsim::payload_bits(m);
    for (const auto& m : msi.down) bits_down += netsim::payload_bits(m);

    MetricsRecord rec;
    rec.round = k;
    rec.protocol = protocol_name(cfg.protocol);
    rec.sim_time_s = sim_time;
    rec.cum_bits_up = bits_up;
    rec.cum_bits_down = bits_down;
    rec.train_loss = -evt::gpd_loglik_grad(pooled, global).loglik;
    out.records.push_back(rec);
    if (cfg.target_loss && rec.train_loss <= *cfg.target_loss) {
      out.reached_target = true;
      out.completion_latency_s = sim_time;
      break;
    }
  }
  return out;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.protocol == ProtocolKind::kExtFl) return run_extfl(cfg);

  Run run(cfg);
  run.setup_data();
  run.setup_hooks();

  federation::EsgdState esgd{run.devices[0].params};
  federation::FsvrgState fsvrg{run.devices[0].params};
  federation::CdState cd;
  federation::FdState fd;
  federation::GadmmState gadmm;
  federation::MixingMatrix mixing;
  if (cfg.protocol == ProtocolKind::kDsgd) {
    mixing = cfg.mixing == "identity" ? federation::MixingMatrix::identity(cfg.devices)
             : cfg.mixing == "ring"   ? federation::MixingMatrix::ring(cfg.devices)
                                      : federation::MixingMatrix::full(cfg.devices);
  }
  std::vector<federation::LocalObjective> gadmm_objectives;
  if (cfg.protocol == ProtocolKind::kGadmm) {
    for (int i = 0; i < cfg.devices; ++i) {
      federation::LocalObjective obj;
      obj.loss_grad = [&run, i](const Vec& w) {
        nn::Batch b = run.train.batch_of(run.devices[i].shard);
        return nn::loss_and_grad(run.cfg.model, w, b);
      };
      gadmm_objectives.push_back(std::move(obj));
    }
  }

  std::mt19937_64 block_rng = make_rng(cfg.seed, "blockfl.mining");
  std::mt19937_64 malf_rng = make_rng(cfg.seed, "blockfl.malfunction");

  RunResult out;
  double sim_time = 0.0;
  std::uint64_t bits_up = 0, bits_down = 0;
  std::int64_t forks = 0;

  for (int k = 1; k <= cfg.rounds; ++k) {
    auto batches = run.draw_batches();
    federation::GradFn grad = run.grad_on(batches);
    federation::DistillContext ctx{&cfg.model, &run.train, &batches};
    RoundMsi msi;
    netsim::Split split = netsim::Split::kHelperDevice;
    double block_time = 0.0;

    switch (cfg.protocol) {
      case ProtocolKind::kCsgd:
        msi = federation::csgd_round(run.devices, grad, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kEsgd:
        msi = federation::esgd_round(run.devices, esgd, grad, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kFavg:
        msi = federation::favg_round(run.devices, grad, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kFsvrg:
        msi = federation::fsvrg_round(run.devices, fsvrg, grad, run.grad_full_shard(), cfg.hyper,
                                      k, run.hooks);
        break;
      case ProtocolKind::kCd:
        msi = federation::cd_round(run.devices, cd, ctx, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kFd:
        msi = federation::fd_round(run.devices, fd, ctx, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kFjd:
        msi = federation::fjd_round(run.devices, fd, ctx, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kDsgd:
        split = netsim::Split::kDeviceDevice;
        msi = federation::dsgd_round(run.devices, mixing, grad, cfg.hyper, k, run.hooks);
        break;
      case ProtocolKind::kGadmm:
        split = netsim::Split::kDeviceDevice;
        msi = federation::gadmm_round(run.devices, gadmm, gadmm_objectives, cfg.hyper, run.hooks);
        break;
      case ProtocolKind::kBlockFl: {
        // Local epochs, weight upload to the miners, one proof-of-work race,
        // then every device reads the freshest block through its own miner.
        const auto& bc = *cfg.blockfl;
        double eta = cfg.hyper.eta_at(k);
        for (int i = 0; i < cfg.devices; ++i) {
          for (int e = 0; e < cfg.hyper.tau; ++e) {
            auto [loss, g] = grad(i, run.devices[i].params);
            (void)loss;
            run.devices[i].params = nn::sgd_step(run.devices[i].params, g, eta);
          }
        }
        std::vector<Vec> received;
        for (int i = 0; i < cfg.devices; ++i) {
          MsiMessage m;
          m.origin = i;
          m.kind = federation::MsiKind::kWeights;
          m.element_bits = cfg.element_bits;
          m.values = run.devices[i].params;
          if (run.hooks.up) run.hooks.up(m);
          received.push_back(m.values);
          msi.up.push_back(std::move(m));
        }
        Vec global = vec::mean_of(received);
        // The downloaded ledger carries every recorded local MSI.
        for (int i = 0; i < cfg.devices; ++i) {
          MsiMessage m;
          m.origin = -1;
          m.kind = federation::MsiKind::kWeights;
          m.element_bits = cfg.element_bits;
          m.values = received[i];
          msi.down.push_back(std::move(m));
        }
        auto outcome = blockfl::simulate_block_round(bc, block_rng);
        if (outcome.forked) ++forks;
        block_time = outcome.total_s;
        if (bc.malfunction && bc.malfunction->prob > 0.0) {
          auto per_miner =
              blockfl::apply_malfunction(global, *bc.malfunction, bc.n_miners, malf_rng);
          for (int i = 0; i < cfg.devices; ++i)
            run.devices[i].params = per_miner[i % bc.n_miners];
        } else {
          for (int i = 0; i < cfg.devices; ++i) run.devices[i].params = global;
        }
        break;
      }
      case ProtocolKind::kExtFl:
        break;  // handled above
    }

    auto timing =
        netsim::price_round(msi, split, cfg.devices, cfg.links, cfg.compute, run.price_rng);
    sim_time += timing.total_s + block_time;
    for (const auto& m : msi.up) bits_up += netsim::payload_bits(m);
    for (const auto& m : msi.down) bits_down += netsim::payload_bits(m);

    Vec global = run.mean_params();
    nn::EvalResult train_eval = nn::evaluate(cfg.model, global, run.train_eval);
    nn::EvalResult test_eval = nn::evaluate(cfg.model, global, run.test_eval);

    MetricsRecord rec;
    rec.round = k;
    rec.protocol = protocol_name(cfg.protocol);
    rec.sim_time_s = sim_time;
    rec.cum_bits_up = bits_up;
    rec.cum_bits_down = bits_down;
    rec.train_loss = train_eval.loss;
    rec.test_loss = test_eval.loss;
    rec.test_acc = test_eval.accuracy;
    if (cfg.protocol == ProtocolKind::kBlockFl) rec.forks = forks;
    out.records.push_back(rec);

    if (cfg.target_loss && rec.train_loss <= *cfg.target_loss) {
      out.reached_target = true;
      out.completion_latency_s = sim_time;
      break;
    }
  }
  return out;
}

}  // namespace fedsim::runner
