#include "heteroiot/ablation.hpp"

namespace hiot {

const std::vector<Variant>& ablation_order() {
  static const std::vector<Variant> order{Variant::GlobalOnly, Variant::LocalOnly,
                                          Variant::MlpOnly, Variant::Full};
  return order;
}

AblationResult run_ablation(const Dataset& ds, const ModelConfig& base, const SplitSpec& split,
                            const TrainConfig& cfg, const std::string& dataset_name,
                            const std::function<void(Variant, const EpochRecord&)>& on_epoch) {
  AblationResult out;
  out.dataset_name = dataset_name;
  for (Variant v : ablation_order()) {
    ModelConfig mc = base;
    mc.variant = v;
    EpochCallback cb;
    if (on_epoch) cb = [&on_epoch, v](const EpochRecord& r) { on_epoch(v, r); };
    out.rows.push_back({v, run_experiment(ds, mc, split, cfg, cb)});
  }
  return out;
}

}  // namespace hiot
