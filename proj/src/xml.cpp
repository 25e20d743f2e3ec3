#include "abase/xml.hpp"

#include <expat.h>

#include <memory>

namespace abase::xml {

const std::string* Node::attr(std::string_view key) const noexcept {
  for (const auto& [k, v] : attrs) {
    if (k == key) return &v;
  }
  return nullptr;
}

const Node* Node::child(std::string_view child_name) const noexcept {
  for (const auto& c : children) {
    if (c.name == child_name) return &c;
  }
  return nullptr;
}

namespace {

struct Builder {
  Node root;
  std::vector<Node*> stack;
  bool have_root = false;
};

void on_start(void* ud, const XML_Char* name, const XML_Char** atts) {
  auto* b = static_cast<Builder*>(ud);
  Node* node;
  if (b->stack.empty()) {
    b->have_root = true;
    node = &b->root;
  } else {
    b->stack.back()->children.emplace_back();
    node = &b->stack.back()->children.back();
  }
  node->name = name;
  for (int i = 0; atts[i]; i += 2) node->attrs.emplace_back(atts[i], atts[i + 1]);
  b->stack.push_back(node);
}

void on_end(void* ud, const XML_Char*) {
  static_cast<Builder*>(ud)->stack.pop_back();
}

void on_text(void* ud, const XML_Char* s, int len) {
  auto* b = static_cast<Builder*>(ud);
  if (!b->stack.empty()) b->stack.back()->text.append(s, static_cast<std::size_t>(len));
}

struct ParserDeleter {
  void operator()(XML_ParserStruct* p) const noexcept { XML_ParserFree(p); }
};

}  // namespace

std::optional<Node> parse(std::string_view doc, std::string* error) {
  std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreate("UTF-8"));
  Builder b;
  XML_SetUserData(parser.get(), &b);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_text);
  if (XML_Parse(parser.get(), doc.data(), static_cast<int>(doc.size()), XML_TRUE) ==
          XML_STATUS_ERROR ||
      !b.have_root) {
    if (error) {
      *error = b.have_root ? XML_ErrorString(XML_GetErrorCode(parser.get())) : "no root element";
      if (b.have_root) {
        *error += " at line " + std::to_string(XML_GetCurrentLineNumber(parser.get()));
      }
    }
    return std::nullopt;
  }
  return std::move(b.root);
}

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '\r': out += "&#13;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_attr(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace abase::xml
