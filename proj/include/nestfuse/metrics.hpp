#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nestfuse/tensor.hpp"

// Fusion quality metrics over (fused, source 1, source 2) triples. Histogram
// metrics work on 8-bit quantised images (see to_8bit).
namespace nestfuse {

/// Shannon entropy (bits) of the 256-bin histogram.
double entropy(const Image& img);

/// Population standard deviation of the 8-bit intensities.
double std_dev(const Image& img);

/// H(A) + H(B) - H(A, B) over 256 x 256 joint histograms.
double mutual_information(const Image& a, const Image& b);

/// I(F; I1) + I(F; I2).
double fusion_mi(const Image& fused, const Image& a, const Image& b);

enum class FmiFeature { kDct, kWavelet };

/// Feature map used by fmi(): magnitudes of 8x8 block DCT coefficients, or of
/// the three level-1 Haar detail bands. Throws Error(kSize) for images
/// smaller than one block.
std::vector<double> fmi_features(const Image& img, FmiFeature feature);

/// 2 I(X; Y) / (H(X) + H(Y)) on 256-bin min-max quantised features; 1 when
/// both features are constant.
double normalized_mi(std::span<const double> x, std::span<const double> y);

/// Mean over both sources of the normalised feature mutual information.
double fmi(const Image& fused, const Image& a, const Image& b, FmiFeature feature);

/// (SSIM(F, I1) + SSIM(F, I2)) / 2.
double ssim_a(const Image& fused, const Image& a, const Image& b);

/// Pixel-domain visual information fidelity of `distorted` w.r.t. `reference`,
/// 4 Gaussian scales, on the 0..255 scale. Throws Error(kSize) below 32x32.
double vif_single(const Image& reference, const Image& distorted);

/// Mean of vif_single(I1, F) and vif_single(I2, F).
double vif(const Image& fused, const Image& a, const Image& b);

struct MetricsReport {
  std::string id;
  double en = 0.0;
  double sd = 0.0;
  double mi = 0.0;
  double fmi_dct = 0.0;
  double fmi_w = 0.0;
  double ssim_a = 0.0;
  double vif = 0.0;

  /// Values in CSV column order.
  std::array<double, 7> values() const { return {en, sd, mi, fmi_dct, fmi_w, ssim_a, vif}; }
};

inline constexpr std::array<const char*, 7> kMetricNames = {"En",    "SD",     "MI", "FMI_dct",
                                                            "FMI_w", "SSIM_a", "VIF"};

/// All seven metrics; errors are rethrown with `id` prefixed.
MetricsReport evaluate_pair(const std::string& id, const Image& fused, const Image& a, const Image& b);

/// Arithmetic mean per metric, id "AVERAGE".
MetricsReport aggregate(std::span<const MetricsReport> reports);

/// Header "pair,En,SD,MI,FMI_dct,FMI_w,SSIM_a,VIF", one row per report and a
/// final AVERAGE row, 5 decimals.
void write_metrics_csv(std::ostream& os, std::span<const MetricsReport> reports);

/// 5-decimal formatting shared by all reports.
std::string format_metric(double v);

}  // namespace nestfuse
