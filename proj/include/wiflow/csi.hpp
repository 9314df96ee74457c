#pragma once

// Intel-5300-style CSI ingestion: capture parsing, bit-packed CSI extraction,
// link fusion into 540-channel ticks, and sliding-window assembly.

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wiflow/tensor.hpp"

namespace wiflow {

struct BfeeRecord {
  std::uint32_t timestamp_low = 0;  // NIC clock ticks
  std::uint16_t bfee_count = 0;
  std::uint8_t n_rx = 0;
  std::uint8_t n_tx = 0;
  std::uint8_t rssi_a = 0;
  std::uint8_t rssi_b = 0;
  std::uint8_t rssi_c = 0;
  std::int8_t noise = 0;
  std::uint8_t agc = 0;
  std::uint8_t antenna_sel = 0;
  std::uint16_t rate = 0;
  std::vector<std::uint8_t> payload;

  // ceil((30 * (n_rx*n_tx*2*8 + 3)) / 8)
  std::size_t expected_payload_bytes() const;
};

struct ParseReport {
  std::size_t parsed = 0;
  std::size_t skipped_non_bfee = 0;
  std::size_t invalid_records = 0;  // payload inconsistent with n_rx*n_tx
  std::size_t truncated = 0;        // partial trailing record dropped
  std::string error;                // framing failure; partial result still returned

  bool ok() const { return error.empty(); }
};

// Capture stream framing: per record a 2-byte big-endian field length followed
// by a 1-byte code; only code 0xBB (beamforming) is decoded, the rest skipped.
std::vector<BfeeRecord> parse_dat_stream(const std::uint8_t* data, std::size_t size,
                                         ParseReport* report = nullptr);
std::vector<BfeeRecord> parse_dat_stream(const std::vector<std::uint8_t>& bytes,
                                         ParseReport* report = nullptr);
std::vector<BfeeRecord> parse_dat_file(const std::string& path, ParseReport* report = nullptr);

// Inverse of parse_dat_stream over valid records (used as a round-trip oracle).
std::vector<std::uint8_t> encode_dat_stream(const std::vector<BfeeRecord>& records);

struct CsiFrame {
  int n_rx = 0;
  int n_tx = 0;
  std::uint32_t timestamp = 0;
  int receiver_id = 0;
  // subcarrier-major: entry ((k * n_rx) + rx) * n_tx + tx, k in [0,30)
  std::vector<std::complex<float>> csi;

  std::complex<float>& at(int k, int rx, int tx) {
    return csi[static_cast<std::size_t>((k * n_rx + rx) * n_tx + tx)];
  }
  const std::complex<float>& at(int k, int rx, int tx) const {
    return csi[static_cast<std::size_t>((k * n_rx + rx) * n_tx + tx)];
  }
};

inline constexpr int kSubcarriers = 30;

// Unpacks the bit-packed payload: per subcarrier a 3-bit skip, then for each
// (rx, tx) in stream order an 8-bit signed real and imaginary part. The
// receive-antenna permutation comes from antenna_sel, 2 bits per antenna.
// Throws std::invalid_argument if the bit cursor would overrun the payload.
CsiFrame decode_bfee(const BfeeRecord& record);

// Exact inverse of decode_bfee for integer-valued frames: packs the CSI matrix
// back into a payload honoring the antenna permutation in antenna_sel.
BfeeRecord encode_bfee(const CsiFrame& frame, std::uint8_t antenna_sel);

// Entrywise modulus; phase is discarded. Same layout as CsiFrame::csi.
std::vector<float> amplitude(const CsiFrame& frame);

// Ordered mapping (receiver_id, tx, rx) -> 30-wide channel block in [0, 18).
struct LinkLayout {
  std::map<std::tuple<int, int, int>, int> blocks;

  static LinkLayout standard(int receiver_a = 0, int receiver_b = 1);
  void validate() const;  // bijective over exactly 18 links
  int block(int receiver_id, int tx, int rx) const;
  std::vector<int> receivers() const;

  nlohmann::json to_json() const;
  static LinkLayout from_json(const nlohmann::json& j);
};

// Fuses one tick: channel 30*block + subcarrier holds that link's amplitude.
// Returns nullopt when any receiver required by the layout is absent (the
// caller counts the dropped tick).
std::optional<std::vector<float>> assemble_links(const std::map<int, CsiFrame>& frames_per_tick,
                                                 const LinkLayout& layout);

struct CsiWindow {
  Tensor<float> values;  // C x T row-major; C is 540 for the standard layout
  std::int64_t start_tick = 0;
  std::string subject_id;
  std::string session_id;
};

// Sliding windows over one session's ticks; window j covers
// [j*stride, j*stride + T). Count is floor((N-T)/stride)+1 for N >= T else 0.
std::vector<CsiWindow> window(const std::vector<std::vector<float>>& ticks, std::int64_t T = 20,
                              std::int64_t stride = 20);

// Per-window standardization to zero mean / unit variance (variance floored at
// 1e-8). Stateless: no dataset-level statistics.
CsiWindow normalize(const CsiWindow& w);

// Integer packets-per-label ratio; throws when the rates do not divide.
std::int64_t align_streams(std::int64_t csi_ticks_hz, std::int64_t label_fps);

}  // namespace wiflow
