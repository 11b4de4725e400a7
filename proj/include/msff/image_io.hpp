#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msff/image.hpp"

namespace msff {

enum class IoErrorKind { bad_magic, truncated, bad_dims, unsupported, os_error };

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  IoErrorKind kind() const { return kind_; }

 private:
  IoErrorKind kind_;
};

// PFM (portable float map). Color "PF" with a little-endian scale line of
// -1.0 on write; both endiannesses accepted on read. Rows are stored
// bottom-to-top per the format. Round trips are bit-identical.
void save_pfm(const std::string& path, const HdrImage& img);
HdrImage load_pfm(const std::string& path);

/// Flow packed into the R (dx) and G (dy) planes of a 3-channel PFM, B = 0.
void save_flow_pfm(const std::string& path, const FlowImage& flow);
FlowImage load_flow_pfm(const std::string& path);

// PNG, 8- or 16-bit. Integer codes map to [0, 1] by division by the max
// code value. Gray and alpha inputs are expanded / stripped.
void save_png8(const std::string& path, const std::vector<std::uint8_t>& rgb, int h, int w);
void save_png16(const std::string& path, const LdrImage& img);
void save_mask_png(const std::string& path, const MaskImage& mask);
LdrImage load_png(const std::string& path);
MaskImage load_mask_png(const std::string& path);

// Binary PPM (P6), 8- or 16-bit.
void save_ppm(const std::string& path, const LdrImage& img, int bit_depth = 8);
LdrImage load_ppm(const std::string& path);

/// Dispatches on file extension (.png / .ppm).
LdrImage load_ldr(const std::string& path);
/// PFM only.
HdrImage load_hdr(const std::string& path);
void save_hdr(const std::string& path, const HdrImage& img);

// exposures.txt: one EV per line, line i for image i. Times are
// t_i = 2^(EV_i - min EV).
std::vector<double> load_exposures(const std::string& path);
void save_exposures(const std::string& path, const std::vector<double>& evs);

/// One dataset scene: <dir>/input_1.png, input_2.png, exposures.txt
/// [, gt.pfm][, gt_flow.pfm][, mask.png].
struct Scene {
  std::string name;
  ExposureStack stack;
  std::optional<FlowImage> gt_flow;
  std::optional<MaskImage> occlusion;
};

Scene load_scene(const std::string& dir);
/// All scene subdirectories of `dir`, sorted by name.
std::vector<Scene> load_dataset(const std::string& dir);

}  // namespace msff
