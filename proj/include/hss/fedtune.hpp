#pragma once
#include "hss/nn.hpp"

// Desk-scale federated fine-tuning: N clients each hold a private slice of
// training data and run a two-party secure training step with the server per
// round. Clients apply the frozen public backbone locally in plaintext and
// share only features. Gradient shares are uploaded under pairwise
// PRG masks that cancel in the sum, so the server learns exactly the
// aggregate gradient mod 2^l and nothing per-client.
namespace hss {

struct FedConfig {
  RingConfig cfg;
  u32 clients = 2;
  u32 rounds = 20;
  u32 per_client = 64;  // samples per client
  u32 d_raw = 16;       // raw input width before the backbone
  HeadConfig head;      // head.d is the backbone feature width
  double lr = 0.25;
  TruncMode mode = TruncMode::Interactive;
  int staged_switch = -1;  // >= 0: rounds before it truncate locally
  u64 seed = 7;
};

struct FedData {
  RingTensor X;               // all clients' features, row-major
  RingTensor Y;               // one-hot labels
  std::vector<u32> labels;
};

struct FedResult {
  std::vector<double> acc;       // train accuracy after each round
  double final_acc = 0;
  u64 total_payload_bits = 0;    // both parties, all rounds and clients
  std::vector<u8> upload_bytes;  // concatenated masked gradient uploads
};

// Deterministic synthetic task: class-dependent raw vectors pushed through a
// frozen random projection + tanh backbone.
FedData make_fed_data(const FedConfig& fc);

FedResult run_fedtune(const FedConfig& fc);
FedResult run_fedtune_plain(const FedConfig& fc);

// Pairwise upload masking, exposed for aggregation and uniformity tests.
// pair_seeds is an N x N row-major table filled for i < j.
std::vector<Block> make_pair_seeds(u64 seed, u32 N);
void apply_pair_masks(std::vector<u64>& g, RingConfig cfg, u32 i, u32 N,
                      u32 round, const std::vector<Block>& pair_seeds);

}  // namespace hss
