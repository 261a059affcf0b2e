#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "provguard/common.hpp"

namespace provguard::coap {

enum class MessageType : std::uint8_t { CON = 0, NON = 1, ACK = 2, RST = 3 };

struct Code {
  std::uint8_t cls = 0;
  std::uint8_t detail = 0;

  constexpr std::uint8_t raw() const { return static_cast<std::uint8_t>(cls << 5 | (detail & 0x1f)); }
  static constexpr Code from_raw(std::uint8_t b) { return Code{static_cast<std::uint8_t>(b >> 5), static_cast<std::uint8_t>(b & 0x1f)}; }
  constexpr bool operator==(const Code&) const = default;
  std::string str() const;
};

inline constexpr Code kEmpty{0, 0};
inline constexpr Code kGet{0, 1};
inline constexpr Code kPost{0, 2};
inline constexpr Code kPut{0, 3};
inline constexpr Code kDelete{0, 4};
inline constexpr Code kChanged{2, 4};
inline constexpr Code kContent{2, 5};
inline constexpr Code kBadRequest{4, 0};
inline constexpr Code kForbidden{4, 3};
inline constexpr Code kNotFound{4, 4};
inline constexpr Code kMethodNotAllowed{4, 5};
inline constexpr Code kInternalError{5, 0};

inline constexpr std::uint16_t kUriPath = 11;
inline constexpr std::uint16_t kContentFormat = 12;
inline constexpr std::uint16_t kUriQuery = 15;

inline constexpr std::size_t kMaxToken = 8;
inline constexpr std::size_t kMaxOptionValue = 255;
/// Largest option delta expressible with the 1-byte extended form.
inline constexpr std::uint32_t kMaxOptionDelta = 268;

struct Option {
  std::uint16_t number = 0;
  Bytes value;

  bool operator==(const Option&) const = default;
};

struct Message {
  std::uint8_t version = 1;
  MessageType type = MessageType::CON;
  Code code = kEmpty;
  std::uint16_t message_id = 0;
  Bytes token;
  std::vector<Option> options;  // kept sorted by number, stable for repeats
  Bytes payload;

  bool operator==(const Message&) const = default;

  void add_option(std::uint16_t number, Bytes value);
  void add_option(std::uint16_t number, std::string_view value);
  void set_uri_path(const std::vector<std::string>& segments);
  std::vector<std::string> option_strings(std::uint16_t number) const;
  std::vector<std::string> uri_path() const { return option_strings(kUriPath); }
  std::string payload_string() const { return {payload.begin(), payload.end()}; }
};

/// RFC 7252 section 3 layout; options delta-encoded with at most the 1-byte
/// extended form. Throws TokenTooLong, OptionTooLong.
Bytes encode(const Message& msg);

/// Inverse of encode. Throws Truncated, BadVersion, ReservedTKL,
/// PayloadMarkerWithoutPayload, MalformedOption; never reads out of bounds.
Message decode(std::span<const std::uint8_t> bytes);

}  // namespace provguard::coap
