#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace abase::xml {

/// Minimal element tree; character data of an element is concatenated in `text`.
struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<Node> children;
  std::string text;

  const std::string* attr(std::string_view key) const noexcept;
  const Node* child(std::string_view child_name) const noexcept;
};

/// Parses a complete document. On failure returns nullopt and fills `error`.
std::optional<Node> parse(std::string_view doc, std::string* error = nullptr);

std::string escape_text(std::string_view s);
std::string escape_attr(std::string_view s);

}  // namespace abase::xml
