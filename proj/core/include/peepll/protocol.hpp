#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "peepll/bytes.hpp"

namespace peepll {

/// A: HMAC tokens. B: plaintext items with blinded Bloom lookups.
/// C: secure index + HMAC. D: secure index + oblivious transfer.
enum class Mode { A, B, C, D };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);  // throws std::invalid_argument

enum class MessageType {
  LookupRequest,
  LookupResponse,
  CreateRequest,
  CreateResponse,
  OtPublicKey,
  OtTransferRequest,
  OtTransferResponse,
  EpochNotice,
  Error,
};

std::string_view to_string(MessageType t);
std::optional<MessageType> parse_message_type(std::string_view s);

inline constexpr std::size_t kMaxMessageBytes = 1 << 20;

/// One protocol message. `body` holds exactly the fields the (type, mode)
/// pair allows; binary values are base64 strings.
///
///   LookupRequest      A {token}          B {filter}           C {trapdoor}
///   LookupResponse     A {pseudonym, token}
///                      B {matches: [{item, pseudonym}]}
///                      C {matches: [{hmac, pseudonym}]}
///   CreateRequest      B {item}           C, D {filter, hmac}
///   CreateResponse     B, C, D {pseudonym}
///   OtPublicKey        D {group, s}
///   OtTransferRequest  D {nonce, r, trapdoor}
///   OtTransferResponse D {entries: [{ct, idx}], retry}
///   EpochNotice        any {blind_bits, k_star, m}
///   Error              any {code, detail}
struct Message {
  MessageType type = MessageType::Error;
  Mode mode = Mode::A;
  std::uint64_t epoch = 0;
  nlohmann::json body = nlohmann::json::object();

  bool operator==(const Message&) const = default;

  /// Decoded binary field; throws ProtocolError("malformed") if absent.
  Bytes bin(std::string_view field) const;
  void set_bin(std::string_view field, ByteView value);
};

/// Throws ProtocolError("malformed") when the body does not match the schema
/// for (type, mode).
void validate(const Message& msg);

/// Canonical newline-terminated JSON with sorted keys.
std::string encode(const Message& msg);
/// Accepts one frame with or without the trailing newline. Every failure is
/// a ProtocolError with code "malformed"; never crashes on arbitrary input.
Message decode(std::string_view frame);

Message make_error(Mode mode, std::uint64_t epoch, std::string code, std::string detail);

/// Field-set equality plus identical encoded length for a mode-A hit response
/// and a mode-A creation response.
bool shape_uniform(const Message& resp_hit, const Message& resp_create);

std::set<std::string> field_names(const nlohmann::json& body);

}  // namespace peepll
