#include "wiflow/csi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

namespace wiflow {

namespace {

// little-endian scalar helpers over raw capture bytes
std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

// LSB-first bit stream over the payload, as the NIC packs it
std::uint8_t read_u8_at_bit(const std::vector<std::uint8_t>& p, std::size_t bit) {
  const std::size_t byte = bit / 8, rem = bit % 8;
  std::uint32_t v = static_cast<std::uint32_t>(p[byte]) >> rem;
  if (rem != 0) v |= static_cast<std::uint32_t>(p[byte + 1]) << (8 - rem);
  return static_cast<std::uint8_t>(v & 0xFF);
}

void write_u8_at_bit(std::vector<std::uint8_t>& p, std::size_t bit, std::uint8_t v) {
  const std::size_t byte = bit / 8, rem = bit % 8;
  p[byte] = static_cast<std::uint8_t>(p[byte] | static_cast<std::uint8_t>(v << rem));
  if (rem != 0) p[byte + 1] = static_cast<std::uint8_t>(p[byte + 1] | (v >> (8 - rem)));
}

// Receive-antenna permutation: stream slot m carries physical antenna
// (antenna_sel >> 2m) & 0x3. Falls back to identity when the advertised
// selection is not a permutation of [0, n_rx).
std::array<int, 3> antenna_permutation(std::uint8_t antenna_sel, int n_rx) {
  std::array<int, 3> perm{0, 1, 2};
  std::array<bool, 3> used{false, false, false};
  bool valid = true;
  for (int m = 0; m < n_rx; ++m) {
    const int v = (antenna_sel >> (2 * m)) & 0x3;
    if (v >= n_rx || used[static_cast<std::size_t>(v)]) {
      valid = false;
      break;
    }
    used[static_cast<std::size_t>(v)] = true;
    perm[static_cast<std::size_t>(m)] = v;
  }
  if (!valid) perm = {0, 1, 2};
  return perm;
}

constexpr std::size_t kBodyHeaderBytes = 20;

}  // namespace

std::size_t BfeeRecord::expected_payload_bytes() const {
  const std::size_t bits =
      static_cast<std::size_t>(kSubcarriers) *
      (static_cast<std::size_t>(n_rx) * n_tx * 2 * 8 + 3);
  return (bits + 7) / 8;
}

std::vector<BfeeRecord> parse_dat_stream(const std::uint8_t* data, std::size_t size,
                                         ParseReport* report) {
  ParseReport local;
  ParseReport& rep = report ? *report : local;
  rep = ParseReport{};

  std::vector<BfeeRecord> out;
  std::size_t pos = 0;
  while (pos < size) {
    if (size - pos < 3) {  // cannot even hold length + code
      ++rep.truncated;
      break;
    }
    const std::size_t field_len =
        (static_cast<std::size_t>(data[pos]) << 8) | data[pos + 1];  // big-endian, counts the code byte
    if (field_len == 0 || pos + 2 + field_len > size) {
      ++rep.truncated;
      rep.error = "record at byte " + std::to_string(pos) + " declares " +
                  std::to_string(field_len) + " bytes but only " +
                  std::to_string(size - pos - 2) + " remain";
      break;
    }
    const std::uint8_t code = data[pos + 2];
    const std::uint8_t* body = data + pos + 3;
    const std::size_t body_len = field_len - 1;
    pos += 2 + field_len;

    if (code != 0xBB) {
      ++rep.skipped_non_bfee;
      continue;
    }
    if (body_len < kBodyHeaderBytes) {
      ++rep.invalid_records;
      continue;
    }
    BfeeRecord rec;
    rec.timestamp_low = le32(body);
    rec.bfee_count = le16(body + 4);
    // body[6..7] reserved
    rec.n_rx = body[8];
    rec.n_tx = body[9];
    rec.rssi_a = body[10];
    rec.rssi_b = body[11];
    rec.rssi_c = body[12];
    rec.noise = static_cast<std::int8_t>(body[13]);
    rec.agc = body[14];
    rec.antenna_sel = body[15];
    const std::size_t payload_len = le16(body + 16);
    rec.rate = le16(body + 18);

    if (rec.n_rx < 1 || rec.n_rx > 3 || rec.n_tx < 1 || rec.n_tx > 3 ||
        payload_len != rec.expected_payload_bytes() ||
        kBodyHeaderBytes + payload_len > body_len) {
      ++rep.invalid_records;
      continue;
    }
    rec.payload.assign(body + kBodyHeaderBytes, body + kBodyHeaderBytes + payload_len);
    out.push_back(std::move(rec));
    ++rep.parsed;
  }
  return out;
}

std::vector<BfeeRecord> parse_dat_stream(const std::vector<std::uint8_t>& bytes,
                                         ParseReport* report) {
  return parse_dat_stream(bytes.data(), bytes.size(), report);
}

std::vector<BfeeRecord> parse_dat_file(const std::string& path, ParseReport* report) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open capture file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return parse_dat_stream(bytes, report);
}

std::vector<std::uint8_t> encode_dat_stream(const std::vector<BfeeRecord>& records) {
  std::vector<std::uint8_t> out;
  for (const BfeeRecord& rec : records) {
    const std::size_t body_len = kBodyHeaderBytes + rec.payload.size();
    const std::size_t field_len = body_len + 1;
    check(field_len <= 0xFFFF, "record too large for 16-bit field length");
    out.push_back(static_cast<std::uint8_t>(field_len >> 8));
    out.push_back(static_cast<std::uint8_t>(field_len & 0xFF));
    out.push_back(0xBB);
    put_le32(out, rec.timestamp_low);
    put_le16(out, rec.bfee_count);
    put_le16(out, 0);  // reserved
    out.push_back(rec.n_rx);
    out.push_back(rec.n_tx);
    out.push_back(rec.rssi_a);
    out.push_back(rec.rssi_b);
    out.push_back(rec.rssi_c);
    out.push_back(static_cast<std::uint8_t>(rec.noise));
    out.push_back(rec.agc);
    out.push_back(rec.antenna_sel);
    put_le16(out, static_cast<std::uint16_t>(rec.payload.size()));
    put_le16(out, rec.rate);
    out.insert(out.end(), rec.payload.begin(), rec.payload.end());
  }
  return out;
}

CsiFrame decode_bfee(const BfeeRecord& record) {
  check(record.n_rx >= 1 && record.n_rx <= 3 && record.n_tx >= 1 && record.n_tx <= 3,
        "antenna counts out of range: n_rx=" + std::to_string(record.n_rx) +
            " n_tx=" + std::to_string(record.n_tx));
  const auto perm = antenna_permutation(record.antenna_sel, record.n_rx);

  CsiFrame f;
  f.n_rx = record.n_rx;
  f.n_tx = record.n_tx;
  f.timestamp = record.timestamp_low;
  f.csi.assign(static_cast<std::size_t>(kSubcarriers) * f.n_rx * f.n_tx, {0.0f, 0.0f});

  const std::size_t total_bits = record.payload.size() * 8;
  std::size_t cursor = 0;
  for (int k = 0; k < kSubcarriers; ++k) {
    cursor += 3;
    for (int rs = 0; rs < f.n_rx; ++rs) {
      for (int tx = 0; tx < f.n_tx; ++tx) {
        check(cursor + 16 <= total_bits,
              "bit cursor overruns payload at subcarrier " + std::to_string(k));
        const auto re = static_cast<std::int8_t>(read_u8_at_bit(record.payload, cursor));
        const auto im = static_cast<std::int8_t>(read_u8_at_bit(record.payload, cursor + 8));
        cursor += 16;
        f.at(k, perm[static_cast<std::size_t>(rs)], tx) = {static_cast<float>(re),
                                                           static_cast<float>(im)};
      }
    }
  }
  return f;
}

BfeeRecord encode_bfee(const CsiFrame& frame, std::uint8_t antenna_sel) {
  check(frame.n_rx >= 1 && frame.n_rx <= 3 && frame.n_tx >= 1 && frame.n_tx <= 3,
        "antenna counts out of range");
  check(frame.csi.size() ==
            static_cast<std::size_t>(kSubcarriers) * frame.n_rx * frame.n_tx,
        "csi matrix size does not match antenna counts");

  BfeeRecord rec;
  rec.timestamp_low = frame.timestamp;
  rec.bfee_count = 0;
  rec.n_rx = static_cast<std::uint8_t>(frame.n_rx);
  rec.n_tx = static_cast<std::uint8_t>(frame.n_tx);
  rec.antenna_sel = antenna_sel;
  rec.payload.assign(rec.expected_payload_bytes(), 0);

  const auto perm = antenna_permutation(antenna_sel, frame.n_rx);
  auto to_i8 = [](float v) {
    check(v == std::nearbyint(v) && v >= -128.0f && v <= 127.0f,
          "csi value " + std::to_string(v) + " is not a signed 8-bit integer");
    return static_cast<std::uint8_t>(static_cast<std::int8_t>(v));
  };

  std::size_t cursor = 0;
  for (int k = 0; k < kSubcarriers; ++k) {
    cursor += 3;
    for (int rs = 0; rs < frame.n_rx; ++rs) {
      for (int tx = 0; tx < frame.n_tx; ++tx) {
        const std::complex<float>& v = frame.at(k, perm[static_cast<std::size_t>(rs)], tx);
        write_u8_at_bit(rec.payload, cursor, to_i8(v.real()));
        write_u8_at_bit(rec.payload, cursor + 8, to_i8(v.imag()));
        cursor += 16;
      }
    }
  }
  return rec;
}

std::vector<float> amplitude(const CsiFrame& frame) {
  std::vector<float> out(frame.csi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(frame.csi[i]);
  return out;
}

LinkLayout LinkLayout::standard(int receiver_a, int receiver_b) {
  LinkLayout layout;
  int block = 0;
  for (int receiver : {receiver_a, receiver_b})
    for (int tx = 0; tx < 3; ++tx)
      for (int rx = 0; rx < 3; ++rx) layout.blocks[{receiver, tx, rx}] = block++;
  layout.validate();
  return layout;
}

void LinkLayout::validate() const {
  check(blocks.size() == 18, "link layout must map exactly 18 links, got " +
                                 std::to_string(blocks.size()));
  std::set<int> seen;
  std::map<int, int> per_receiver;
  for (const auto& [key, block] : blocks) {
    const auto [receiver, tx, rx] = key;
    check(tx >= 0 && tx < 3 && rx >= 0 && rx < 3,
          "link antenna indices out of range for receiver " + std::to_string(receiver));
    check(block >= 0 && block < 18, "channel block out of range: " + std::to_string(block));
    check(seen.insert(block).second, "duplicate channel block " + std::to_string(block));
    ++per_receiver[receiver];
  }
  check(per_receiver.size() == 2, "link layout must span exactly 2 receivers");
  for (const auto& [receiver, n] : per_receiver)
    check(n == 9, "receiver " + std::to_string(receiver) + " must contribute 9 links");
}

int LinkLayout::block(int receiver_id, int tx, int rx) const {
  auto it = blocks.find({receiver_id, tx, rx});
  check(it != blocks.end(), "no channel block for receiver " + std::to_string(receiver_id) +
                                " tx " + std::to_string(tx) + " rx " + std::to_string(rx));
  return it->second;
}

std::vector<int> LinkLayout::receivers() const {
  std::set<int> ids;
  for (const auto& [key, block] : blocks) ids.insert(std::get<0>(key));
  return {ids.begin(), ids.end()};
}

nlohmann::json LinkLayout::to_json() const {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& [key, block] : blocks) {
    const auto [receiver, tx, rx] = key;
    links.push_back({{"receiver", receiver}, {"tx", tx}, {"rx", rx}, {"block", block}});
  }
  return nlohmann::json{{"links", links}};
}

LinkLayout LinkLayout::from_json(const nlohmann::json& j) {
  LinkLayout layout;
  check(j.contains("links") && j.at("links").is_array(), "layout json needs a 'links' array");
  for (const auto& e : j.at("links")) {
    const int receiver = e.at("receiver").get<int>();
    const int tx = e.at("tx").get<int>();
    const int rx = e.at("rx").get<int>();
    const int block = e.at("block").get<int>();
    check(layout.blocks.emplace(std::make_tuple(receiver, tx, rx), block).second,
          "duplicate link (receiver " + std::to_string(receiver) + ", tx " +
              std::to_string(tx) + ", rx " + std::to_string(rx) + ")");
  }
  layout.validate();
  return layout;
}

std::optional<std::vector<float>> assemble_links(const std::map<int, CsiFrame>& frames_per_tick,
                                                 const LinkLayout& layout) {
  layout.validate();
  for (int receiver : layout.receivers())
    if (!frames_per_tick.count(receiver)) return std::nullopt;

  std::vector<float> out(540, 0.0f);
  for (const auto& [key, block] : layout.blocks) {
    const auto [receiver, tx, rx] = key;
    const CsiFrame& f = frames_per_tick.at(receiver);
    check(f.n_rx == 3 && f.n_tx == 3, "link fusion expects 3x3 frames, receiver " +
                                          std::to_string(receiver) + " has " +
                                          std::to_string(f.n_rx) + "x" +
                                          std::to_string(f.n_tx));
    for (int k = 0; k < kSubcarriers; ++k)
      out[static_cast<std::size_t>(kSubcarriers * block + k)] = std::abs(f.at(k, rx, tx));
  }
  return out;
}

std::vector<CsiWindow> window(const std::vector<std::vector<float>>& ticks, std::int64_t T,
                              std::int64_t stride) {
  check(T >= 1, "window length must be positive");
  check(stride >= 1, "stride must be positive");
  const auto n = static_cast<std::int64_t>(ticks.size());
  std::vector<CsiWindow> out;
  if (n < T) return out;
  const std::int64_t count = (n - T) / stride + 1;
  const auto width = static_cast<std::int64_t>(ticks[0].size());
  check(width >= 1, "ticks must carry at least one channel");
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t j = 0; j < count; ++j) {
    CsiWindow w;
    w.start_tick = j * stride;
    w.values = Tensor<float>::zeros({width, T});
    for (std::int64_t t = 0; t < T; ++t) {
      const auto& tick = ticks[static_cast<std::size_t>(j * stride + t)];
      check(static_cast<std::int64_t>(tick.size()) == width,
            "tick " + std::to_string(j * stride + t) + " has " +
                std::to_string(tick.size()) + " channels, expected " + std::to_string(width));
      for (std::int64_t c = 0; c < width; ++c)
        w.values.flat()[static_cast<std::size_t>(c * T + t)] = tick[static_cast<std::size_t>(c)];
    }
    out.push_back(std::move(w));
  }
  return out;
}

CsiWindow normalize(const CsiWindow& w) {
  const auto& src = w.values.flat();
  check(src.size() > 0, "cannot normalize an empty window");
  double mean = 0.0;
  for (float v : src) mean += v;
  mean /= static_cast<double>(src.size());
  double var = 0.0;
  for (float v : src) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(src.size());
  const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-8));

  CsiWindow out = w;
  out.values = w.values.clone();
  for (auto& v : out.values.flat())
    v = static_cast<float>((v - mean) * inv_std);
  return out;
}

std::int64_t align_streams(std::int64_t csi_ticks_hz, std::int64_t label_fps) {
  check(csi_ticks_hz >= 1 && label_fps >= 1, "rates must be positive");
  check(csi_ticks_hz % label_fps == 0,
        "csi rate " + std::to_string(csi_ticks_hz) + " Hz is not divisible by label rate " +
            std::to_string(label_fps) + " fps");
  return csi_ticks_hz / label_fps;
}

}  // namespace wiflow
