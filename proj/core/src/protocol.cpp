#include "peepll/protocol.hpp"

#include <array>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "peepll/errors.hpp"

namespace peepll {

namespace {

constexpr std::array kModeNames{"A", "B", "C", "D"};
constexpr std::array kTypeNames{"LookupRequest",     "LookupResponse",     "CreateRequest",
                                "CreateResponse",    "OtPublicKey",        "OtTransferRequest",
                                "OtTransferResponse", "EpochNotice",       "Error"};

[[noreturn]] void malformed(const std::string& detail) { throw ProtocolError("malformed", detail); }

enum class Kind { bin, str, uint, boolean, list };

struct Field {
  const char* name;
  Kind kind;
  std::size_t fixed_len = 0;          // for bin; 0 = any length
  const std::vector<Field>* items = nullptr;  // for list
};

const std::vector<Field> kItemMatch{{"item", Kind::bin}, {"pseudonym", Kind::bin, 16}};
const std::vector<Field> kHmacMatch{{"hmac", Kind::bin, 32}, {"pseudonym", Kind::bin, 16}};
const std::vector<Field> kSealed{{"ct", Kind::bin}, {"idx", Kind::bin, 32}};

std::optional<std::vector<Field>> schema(MessageType type, Mode mode) {
  using T = MessageType;
  switch (type) {
    case T::LookupRequest:
      if (mode == Mode::A) return std::vector<Field>{{"token", Kind::bin, 32}};
      if (mode == Mode::B) return std::vector<Field>{{"filter", Kind::bin}};
      if (mode == Mode::C) return std::vector<Field>{{"trapdoor", Kind::bin}};
      return std::nullopt;
    case T::LookupResponse:
      if (mode == Mode::A) return std::vector<Field>{{"pseudonym", Kind::bin, 16}, {"token", Kind::bin, 32}};
      if (mode == Mode::B) return std::vector<Field>{{"matches", Kind::list, 0, &kItemMatch}};
      if (mode == Mode::C) return std::vector<Field>{{"matches", Kind::list, 0, &kHmacMatch}};
      return std::nullopt;
    case T::CreateRequest:
      if (mode == Mode::B) return std::vector<Field>{{"item", Kind::bin}};
      if (mode == Mode::C || mode == Mode::D) {
        return std::vector<Field>{{"filter", Kind::bin}, {"hmac", Kind::bin, 32}};
      }
      return std::nullopt;
    case T::CreateResponse:
      if (mode == Mode::A) return std::nullopt;
      return std::vector<Field>{{"pseudonym", Kind::bin, 16}};
    case T::OtPublicKey:
      if (mode != Mode::D) return std::nullopt;
      return std::vector<Field>{{"group", Kind::str}, {"s", Kind::bin}};
    case T::OtTransferRequest:
      if (mode != Mode::D) return std::nullopt;
      return std::vector<Field>{{"nonce", Kind::bin, 32}, {"r", Kind::bin}, {"trapdoor", Kind::bin}};
    case T::OtTransferResponse:
      if (mode != Mode::D) return std::nullopt;
      return std::vector<Field>{{"entries", Kind::list, 0, &kSealed}, {"retry", Kind::boolean}};
    case T::EpochNotice:
      return std::vector<Field>{{"blind_bits", Kind::uint}, {"k_star", Kind::uint}, {"m", Kind::uint}};
    case T::Error:
      return std::vector<Field>{{"code", Kind::str}, {"detail", Kind::str}};
  }
  return std::nullopt;
}

void check_object(const nlohmann::json& obj, const std::vector<Field>& fields, const std::string& where) {
  if (!obj.is_object()) malformed(where + " must be an object");
  if (obj.size() != fields.size()) malformed(where + " has unexpected field count");
  for (const auto& f : fields) {
    auto it = obj.find(f.name);
    if (it == obj.end()) malformed(where + " missing field " + f.name);
    const auto& v = *it;
    switch (f.kind) {
      case Kind::bin: {
        if (!v.is_string()) malformed(std::string(f.name) + " must be a base64 string");
        Bytes raw;
        try {
          raw = base64_decode(v.get_ref<const std::string&>());
        } catch (const std::invalid_argument&) {
          malformed(std::string(f.name) + " is not valid base64");
        }
        if (f.fixed_len != 0 && raw.size() != f.fixed_len) {
          malformed(std::string(f.name) + " has wrong length");
        }
        break;
      }
      case Kind::str:
        if (!v.is_string()) malformed(std::string(f.name) + " must be a string");
        break;
      case Kind::uint:
        if (!v.is_number_unsigned()) malformed(std::string(f.name) + " must be a non-negative integer");
        break;
      case Kind::boolean:
        if (!v.is_boolean()) malformed(std::string(f.name) + " must be a boolean");
        break;
      case Kind::list:
        if (!v.is_array()) malformed(std::string(f.name) + " must be an array");
        for (const auto& item : v) check_object(item, *f.items, std::string(f.name) + "[]");
        break;
    }
  }
}

}  // namespace

std::string_view to_string(Mode m) { return kModeNames[static_cast<std::size_t>(m)]; }

Mode parse_mode(std::string_view s) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (s == kModeNames[i]) return static_cast<Mode>(i);
  }
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

std::string_view to_string(MessageType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

std::optional<MessageType> parse_message_type(std::string_view s) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (s == kTypeNames[i]) return static_cast<MessageType>(i);
  }
  return std::nullopt;
}

Bytes Message::bin(std::string_view field) const {
  auto it = body.find(field);
  if (it == body.end() || !it->is_string()) malformed("missing binary field " + std::string(field));
  try {
    return base64_decode(it->get_ref<const std::string&>());
  } catch (const std::invalid_argument&) {
    malformed("field " + std::string(field) + " is not valid base64");
  }
}

void Message::set_bin(std::string_view field, ByteView value) {
  body[std::string(field)] = base64_encode(value);
}

void validate(const Message& msg) {
  auto fields = schema(msg.type, msg.mode);
  if (!fields) {
    malformed(std::string(to_string(msg.type)) + " is not defined in mode " + std::string(to_string(msg.mode)));
  }
  check_object(msg.body, *fields, "body");
}

std::string encode(const Message& msg) {
  validate(msg);
  nlohmann::json j{{"body", msg.body},
                   {"epoch", msg.epoch},
                   {"mode", to_string(msg.mode)},
                   {"type", to_string(msg.type)}};
  auto out = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  out.push_back('\n');
  return out;
}

Message decode(std::string_view frame) {
  if (frame.size() > kMaxMessageBytes) malformed("message exceeds 1 MiB");
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  auto j = nlohmann::json::parse(frame, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) malformed("invalid JSON");
  if (!j.is_object() || j.size() != 4) malformed("envelope must have exactly body, epoch, mode, type");
  auto type_it = j.find("type");
  auto mode_it = j.find("mode");
  auto epoch_it = j.find("epoch");
  auto body_it = j.find("body");
  if (type_it == j.end() || mode_it == j.end() || epoch_it == j.end() || body_it == j.end()) {
    malformed("envelope must have exactly body, epoch, mode, type");
  }
  if (!type_it->is_string() || !mode_it->is_string()) malformed("type and mode must be strings");
  if (!epoch_it->is_number_unsigned()) malformed("epoch must be a non-negative integer");

  Message msg;
  auto type = parse_message_type(type_it->get_ref<const std::string&>());
  if (!type) malformed("unknown message type");
  msg.type = *type;
  try {
    msg.mode = parse_mode(mode_it->get_ref<const std::string&>());
  } catch (const std::invalid_argument&) {
    malformed("unknown mode");
  }
  msg.epoch = epoch_it->get<std::uint64_t>();
  msg.body = std::move(*body_it);
  validate(msg);
  return msg;
}

Message make_error(Mode mode, std::uint64_t epoch, std::string code, std::string detail) {
  Message m;
  m.type = MessageType::Error;
  m.mode = mode;
  m.epoch = epoch;
  m.body = {{"code", std::move(code)}, {"detail", std::move(detail)}};
  return m;
}

std::set<std::string> field_names(const nlohmann::json& body) {
  std::set<std::string> names;
  for (const auto& [k, v] : body.items()) names.insert(k);
  return names;
}

bool shape_uniform(const Message& resp_hit, const Message& resp_create) {
  if (resp_hit.mode != Mode::A || resp_create.mode != Mode::A) return false;
  if (resp_hit.type != MessageType::LookupResponse || resp_create.type != MessageType::LookupResponse) {
    return false;
  }
  return field_names(resp_hit.body) == field_names(resp_create.body) &&
         encode(resp_hit).size() == encode(resp_create).size();
}

}  // namespace peepll
