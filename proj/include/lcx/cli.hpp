// SPDX-License-Identifier: Apache-2.0
//
// Subcommand bodies. The executable in tools/ only parses flags and maps
// lcx::Error kinds onto exit codes; everything testable lives here.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lcx/earlystop.hpp"
#include "lcx/error.hpp"
#include "lcx/io.hpp"
#include "lcx/mcmc.hpp"
#include "lcx/pfn/bin_grid.hpp"
#include "lcx/pfn/model.hpp"
#include "lcx/pfn/train.hpp"

namespace lcx::cli {

enum ExitCode : int { ok = 0, config_error = 2, io_error = 3, numeric_error = 4 };
int exit_code_for(ErrorKind kind);

pfn::ModelConfig model_config(const io::RunConfig& cfg);
pfn::TrainConfig train_config(const io::RunConfig& cfg, std::uint64_t seed);
mcmc::ChainConfig chain_config(const io::RunConfig& cfg, std::uint64_t seed);
/// `policy` may list several policies, comma separated.
std::vector<earlystop::TerminationPolicy> policies(const io::RunConfig& cfg);

void write_bins(const pfn::BinGrid& grid, const std::string& path);
pfn::BinGrid read_bins(const std::string& path);

/// Values in curve space; the file is tagged space=normalized. With
/// `means_out`, the noiseless means go to a second file of the same shape.
void sample_prior(int n, int m, std::uint64_t seed, const std::string& out, const std::string& means_out = "");

pfn::BinGrid build_bins(int n_draws, int m, int nbins, std::uint64_t seed, const std::string& out);

/// Writes the checkpoint (+ sidecar) and `<out>.losses.csv` (step,loss,lr).
/// Bins come from cfg `bins` (a file written by build_bins) or are drawn from
/// the prior with bin_draws / bin_seed.
void train(const io::RunConfig& cfg, std::uint64_t seed, const std::string& out, std::ostream* log = nullptr);

/// Quantile CSV `curve_id,step,epoch,q05,q50,q95` in raw units. Observes the
/// first ceil(cutoff * length) points of each (subsampled) curve; empty
/// `queries` means every later step up to the model horizon.
void infer(const std::string& checkpoint, const std::string& curves, double cutoff, const std::vector<int>& queries,
           const std::string& out);

/// Methods from cfg `methods` (pfn, mcmc, mcmc-lse, mcmc-map, mcmc-default),
/// cutoffs from cfg `cutoffs`. Writes records to `out` and mean ranks to
/// `<out>.ranks.csv`.
void eval(const io::RunConfig& cfg, const std::string& curves, std::uint64_t seed, int threads,
          const std::string& out, std::ostream* log = nullptr);

/// Candidate order used by earlystop for (task index, ordering index).
std::vector<size_t> candidate_order(size_t n, std::uint64_t seed, size_t task, int ordering);

/// Each task_id in the curve file is one selection problem; it is replayed
/// under every configured policy for cfg `orderings` random candidate orders.
void earlystop(const io::RunConfig& cfg, const std::string& curves, std::uint64_t seed, int threads,
               const std::string& out);

}  // namespace lcx::cli
