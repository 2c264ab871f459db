#pragma once

// ADAM trainer with epoch-milestone learning-rate decay, deterministic
// shuffling/noise streams, per-epoch checkpoints and a step-level run log.

#include <filesystem>
#include <string>
#include <vector>

#include "glissando/data.hpp"
#include "glissando/metrics.hpp"
#include "glissando/model.hpp"

namespace glissando {

struct TrainConfig {
    double lr = 1e-4;
    std::vector<int> lr_milestones;       // epoch indices, strictly increasing
    std::vector<double> lr_decay_factors; // one per milestone
    int epochs = 1;
    int batch_size = 8;
    uint64_t seed = 0;
    LossWeights loss_weights;
    ModelConfig model;
    std::string dataset;  // manifest path
    std::string out_dir = "runs/default";
    std::string train_split = "train";
    int checkpoint_every = 1; // epochs; 0 = final checkpoint only
    int val_every = 0;        // epochs between val-split evaluations; 0 = off

    void validate() const;
};

// Strict parser over the flat key-value config format; unknown keys fail.
TrainConfig load_train_config(const std::string& path);

// lr * product of decay factors whose milestone <= epoch.
double effective_lr(const TrainConfig& cfg, int epoch);

struct StepRecord {
    int epoch = 0;
    int64_t step = 0; // monotone across the run
    LossBreakdown loss;
    double lr = 0.0;
    double wall_ms = 0.0;
};

struct RunLog {
    std::vector<StepRecord> steps;
    struct EpochVal {
        int epoch;
        std::vector<CategoryReport> reports;
    };
    std::vector<EpochVal> validations;

    std::string to_csv() const;
};

struct TrainResult {
    RunLog log;
    std::string final_checkpoint;
    std::string last_checkpoint;
};

// Trains from scratch or resumes; writes last.ckpt/final.ckpt plus
// runlog.csv under cfg.out_dir.
TrainResult train(const TrainConfig& cfg, const std::string& resume_ckpt = "");

// Loads every sample of a split into memory (desk-scale datasets).
std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split);

} // namespace glissando
