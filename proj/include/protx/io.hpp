#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "protx/optimizer.hpp"
#include "protx/tally.hpp"

namespace protx {

inline constexpr const char* kToolVersion = "protx 0.1.0";

// All CSV emission uses %.12g formatting and deterministic row order
// (depth-major), so identical results produce identical bytes.
std::string format_double(double v);

void write_fluence_csv(const std::string& path, const FluenceMap& map);

// Node-field export restricted onto a tally grid (stderr column zero).
void write_field_csv(const std::string& path, const Grid& grid,
                     const std::vector<double>& values);

void write_dose_csv(const std::string& path, const DoseCurve& curve);

// Dose samples on an arbitrary uniform depth axis (bins built around the
// samples); used for optimizer output on mesh nodes.
void write_dose_samples_csv(const std::string& path,
                            const std::vector<double>& z,
                            const Eigen::VectorXd& dose);

void write_weights_csv(const std::string& path, const BeamBank& bank,
                       const Eigen::VectorXd& weights);

void write_trace_csv(const std::string& path, const OptResult& result);

struct ManifestEntry {
  std::string key;
  std::string value;
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

}  // namespace protx
