#include "provguard/coap.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace provguard::coap {

std::string Code::str() const { return fmt::format("{}.{:02d}", cls, detail); }

void Message::add_option(std::uint16_t number, Bytes value) {
  auto pos = std::upper_bound(options.begin(), options.end(), number,
                              [](std::uint16_t n, const Option& o) { return n < o.number; });
  options.insert(pos, Option{number, std::move(value)});
}

void Message::add_option(std::uint16_t number, std::string_view value) {
  add_option(number, Bytes(value.begin(), value.end()));
}

void Message::set_uri_path(const std::vector<std::string>& segments) {
  std::erase_if(options, [](const Option& o) { return o.number == kUriPath; });
  for (const auto& s : segments) add_option(kUriPath, std::string_view(s));
}

std::vector<std::string> Message::option_strings(std::uint16_t number) const {
  std::vector<std::string> out;
  for (const auto& o : options)
    if (o.number == number) out.emplace_back(o.value.begin(), o.value.end());
  return out;
}

namespace {

// Splits a delta or length into its 4-bit nibble and optional extension byte.
std::uint8_t nibble_for(std::uint32_t v) { return v < 13 ? static_cast<std::uint8_t>(v) : 13; }

}  // namespace

Bytes encode(const Message& msg) {
  if (msg.token.size() > kMaxToken) throw Error(ErrorCode::TokenTooLong, fmt::format("token of {} bytes", msg.token.size()));

  auto options = msg.options;
  std::stable_sort(options.begin(), options.end(), [](const Option& a, const Option& b) { return a.number < b.number; });

  Bytes out;
  out.reserve(4 + msg.token.size() + msg.payload.size() + 16);
  out.push_back(static_cast<std::uint8_t>(1 << 6 | static_cast<std::uint8_t>(msg.type) << 4 | msg.token.size()));
  out.push_back(msg.code.raw());
  out.push_back(static_cast<std::uint8_t>(msg.message_id >> 8));
  out.push_back(static_cast<std::uint8_t>(msg.message_id & 0xff));
  out.insert(out.end(), msg.token.begin(), msg.token.end());

  std::uint32_t previous = 0;
  for (const auto& opt : options) {
    const std::uint32_t delta = opt.number - previous;
    const std::uint32_t length = static_cast<std::uint32_t>(opt.value.size());
    if (length > kMaxOptionValue) throw Error(ErrorCode::OptionTooLong, fmt::format("option {} value of {} bytes", opt.number, length));
    if (delta > kMaxOptionDelta)
      throw Error(ErrorCode::OptionTooLong, fmt::format("option delta {} needs 2-byte extension", delta));
    const std::uint8_t dn = nibble_for(delta);
    const std::uint8_t ln = nibble_for(length);
    out.push_back(static_cast<std::uint8_t>(dn << 4 | ln));
    if (dn == 13) out.push_back(static_cast<std::uint8_t>(delta - 13));
    if (ln == 13) out.push_back(static_cast<std::uint8_t>(length - 13));
    out.insert(out.end(), opt.value.begin(), opt.value.end());
    previous = opt.number;
  }

  if (!msg.payload.empty()) {
    out.push_back(0xFF);
    out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  }
  return out;
}

Message decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::Truncated, fmt::format("{} bytes, header needs 4", bytes.size()));
  Message msg;
  const std::uint8_t first = bytes[0];
  if ((first >> 6) != 1) throw Error(ErrorCode::BadVersion, fmt::format("version {}", first >> 6));
  msg.type = static_cast<MessageType>((first >> 4) & 0x03);
  const std::size_t tkl = first & 0x0f;
  if (tkl > kMaxToken) throw Error(ErrorCode::ReservedTKL, fmt::format("TKL {}", tkl));
  msg.code = Code::from_raw(bytes[1]);
  msg.message_id = static_cast<std::uint16_t>(bytes[2] << 8 | bytes[3]);

  std::size_t pos = 4;
  if (bytes.size() - pos < tkl) throw Error(ErrorCode::Truncated, "token extends past end");
  msg.token.assign(bytes.begin() + pos, bytes.begin() + pos + tkl);
  pos += tkl;

  std::uint32_t number = 0;
  while (pos < bytes.size()) {
    const std::uint8_t head = bytes[pos++];
    if (head == 0xFF) {
      if (pos == bytes.size()) throw Error(ErrorCode::PayloadMarkerWithoutPayload, "0xFF is the final byte");
      msg.payload.assign(bytes.begin() + pos, bytes.end());
      return msg;
    }
    std::uint32_t delta = head >> 4;
    std::uint32_t length = head & 0x0f;
    if (delta == 15 || length == 15) throw Error(ErrorCode::MalformedOption, "reserved nibble 15");
    if (delta == 14 || length == 14) throw Error(ErrorCode::MalformedOption, "2-byte extended form unsupported");
    if (delta == 13) {
      if (pos >= bytes.size()) throw Error(ErrorCode::Truncated, "option delta extension missing");
      delta = 13u + bytes[pos++];
    }
    if (length == 13) {
      if (pos >= bytes.size()) throw Error(ErrorCode::Truncated, "option length extension missing");
      length = 13u + bytes[pos++];
    }
    if (length > kMaxOptionValue) throw Error(ErrorCode::MalformedOption, fmt::format("option length {}", length));
    number += delta;
    if (number > 0xFFFF) throw Error(ErrorCode::MalformedOption, "option number overflow");
    if (bytes.size() - pos < length) throw Error(ErrorCode::Truncated, "option value extends past end");
    msg.options.push_back(Option{static_cast<std::uint16_t>(number),
                                 Bytes(bytes.begin() + pos, bytes.begin() + pos + length)});
    pos += length;
  }
  return msg;
}

}  // namespace provguard::coap
