// Trains a small model on a dataset directory and prints test metrics.
//
//   quickstart data/umls [epochs]

#include <cstdlib>
#include <iostream>

#include "dans/dans.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: quickstart DATA_DIR [EPOCHS]\n";
    return 1;
  }
  dans::tune_allocator();
  dans::KnowledgeGraph kg = dans::load_dataset(argv[1], /*add_inverses=*/true);
  std::cout << "entities " << kg.num_entities << ", relations " << kg.num_base_relations << ", train "
            << kg.train_base.size() << "\n";

  dans::Config config;
  config.set("model.dim", "32");
  config.set("pretrain.epochs", "50");
  config.set("train.epochs", argc > 2 ? argv[2] : "20");
  config.set("train.lr", "0.001");
  config.set("diffusion.T", "40");
  dans::TrainConfig cfg = dans::TrainConfig::from(config);

  dans::Model model = dans::prepare_model(kg, cfg, std::cerr);
  std::cout << "difficulty of entity 0: " << model.zeta[0] << "\n";

  dans::Trainer trainer(kg, model, cfg);
  dans::TrainResult result = trainer.run({}, std::cerr);
  std::cout << "best valid MRR " << result.best_valid_mrr << " at epoch " << result.best_epoch << "\n";

  dans::write_metrics(dans::evaluate(kg, kg.test, model.scorer).metrics, std::cout);
}
