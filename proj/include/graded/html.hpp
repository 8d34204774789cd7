#pragma once

#include <string>
#include <string_view>

namespace graded::html {

// Decodes the five XML entities, numeric references and the common named
// Latin-1 entities. Unknown entities are left as written.
std::string decode_entities(std::string_view text);

// Markup to plain text. Block elements become paragraph breaks ("\n\n"),
// whitespace inside a paragraph collapses to single spaces, and script,
// style and head contents are dropped.
std::string to_text(std::string_view markup);

// Main-content heuristic for full pages: paragraphs are attributed to their
// innermost container element (div, article, main, section, td, body) and
// the container with the most non-link text wins. Navigation, header,
// footer, aside and form subtrees never contribute. Falls back to
// to_text() when no container holds text.
std::string main_content(std::string_view page);

}  // namespace graded::html
