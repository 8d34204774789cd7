#include "graded/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <vector>

#include "graded/utf8.hpp"

namespace graded::html {
namespace {

struct NamedEntity {
  std::string_view name;
  char32_t cp;
};

constexpr std::array<NamedEntity, 46> kEntities{{
    {"amp", U'&'},     {"lt", U'<'},      {"gt", U'>'},       {"quot", U'"'},
    {"apos", U'\''},   {"nbsp", U' '},    {"laquo", U'«'},    {"raquo", U'»'},
    {"lsquo", U'‘'},   {"rsquo", U'’'},   {"ldquo", U'“'},    {"rdquo", U'”'},
    {"hellip", U'…'},  {"ndash", U'–'},   {"mdash", U'—'},    {"eacute", U'é'},
    {"egrave", U'è'},  {"ecirc", U'ê'},   {"euml", U'ë'},     {"agrave", U'à'},
    {"acirc", U'â'},   {"auml", U'ä'},    {"icirc", U'î'},    {"iuml", U'ï'},
    {"ocirc", U'ô'},   {"ouml", U'ö'},    {"ugrave", U'ù'},   {"ucirc", U'û'},
    {"uuml", U'ü'},    {"ccedil", U'ç'},  {"Eacute", U'É'},   {"Egrave", U'È'},
    {"Ecirc", U'Ê'},   {"Agrave", U'À'},  {"Ccedil", U'Ç'},   {"oelig", U'œ'},
    {"OElig", U'Œ'},   {"aelig", U'æ'},   {"szlig", U'ß'},    {"ntilde", U'ñ'},
    {"aacute", U'á'},  {"iacute", U'í'},  {"oacute", U'ó'},   {"uacute", U'ú'},
    {"euro", U'€'},    {"copy", U'©'},
}};

bool is_block(std::string_view tag) {
  static constexpr std::array<std::string_view, 30> kBlocks{
      "p",       "div",     "br",     "li",         "ul",     "ol",      "h1",    "h2",
      "h3",      "h4",      "h5",     "h6",         "article", "section", "main",  "header",
      "footer",  "nav",     "aside",  "blockquote", "tr",     "td",      "th",    "table",
      "figure",  "figcaption", "pre", "hr",         "dd",     "dt"};
  return std::find(kBlocks.begin(), kBlocks.end(), tag) != kBlocks.end();
}

bool is_container(std::string_view tag) {
  return tag == "div" || tag == "article" || tag == "main" || tag == "section" || tag == "td" ||
         tag == "body";
}

bool is_dropped(std::string_view tag) {
  return tag == "script" || tag == "style" || tag == "noscript" || tag == "template" ||
         tag == "head" || tag == "svg" || tag == "iframe";
}

bool is_boilerplate(std::string_view tag) {
  return tag == "nav" || tag == "header" || tag == "footer" || tag == "aside" || tag == "form";
}

bool is_void(std::string_view tag) {
  return tag == "br" || tag == "hr" || tag == "img" || tag == "meta" || tag == "link" ||
         tag == "input" || tag == "source" || tag == "wbr";
}

struct Tag {
  std::string name;  // lowercase
  bool closing = false;
  bool self_closing = false;
};

// Parses the tag starting at text[i] == '<'; returns the index after '>'.
std::size_t parse_tag(std::string_view text, std::size_t i, Tag& tag) {
  std::size_t j = i + 1;
  if (text.compare(j, 3, "!--") == 0) {
    const auto end = text.find("-->", j + 3);
    tag.name = "!--";
    return end == std::string_view::npos ? text.size() : end + 3;
  }
  if (j < text.size() && (text[j] == '!' || text[j] == '?')) {
    const auto end = text.find('>', j);
    tag.name = "!";
    return end == std::string_view::npos ? text.size() : end + 1;
  }
  if (j < text.size() && text[j] == '/') {
    tag.closing = true;
    ++j;
  }
  while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '-' ||
                             text[j] == ':')) {
    tag.name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
    ++j;
  }
  // skip attributes, honouring quotes
  char quote = 0;
  while (j < text.size()) {
    const char c = text[j];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      if (j > 0 && text[j - 1] == '/') tag.self_closing = true;
      return j + 1;
    }
    ++j;
  }
  return text.size();
}

std::string collapse(std::string_view text) {
  std::string out;
  bool space = false;
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value) || cp.value == U' ') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    utf8::append(out, cp.value);
  }
  return out;
}

struct Paragraph {
  std::string text;
  std::size_t container = 0;
  std::size_t link_chars = 0;
};

// Walks the markup once and produces paragraphs tagged with the container
// (an index into a per-document container list) they belong to.
std::vector<Paragraph> paragraphs(std::string_view markup, bool drop_boilerplate) {
  std::vector<Paragraph> out;
  std::vector<std::string> stack;               // open elements
  std::vector<std::size_t> containers{0};       // container ids, 0 = document
  std::vector<std::size_t> container_depth{0};  // stack depth when opened
  std::size_t next_container = 1;
  std::size_t dropped_depth = 0;  // > 0 while inside a dropped subtree
  std::string dropped_tag;
  std::size_t link_depth = 0;
  Paragraph current;
  std::string raw;  // raw text of the current paragraph, entities pending
  std::size_t raw_link = 0;

  const auto close_paragraph = [&] {
    std::string text = collapse(decode_entities(raw));
    if (!text.empty()) {
      current.text = std::move(text);
      current.container = containers.back();
      current.link_chars = raw_link;
      out.push_back(std::move(current));
    }
    current = Paragraph{};
    raw.clear();
    raw_link = 0;
  };

  std::size_t i = 0;
  while (i < markup.size()) {
    if (markup[i] != '<') {
      const auto next = markup.find('<', i);
      const auto chunk = markup.substr(i, next == std::string_view::npos ? std::string_view::npos
                                                                         : next - i);
      if (dropped_depth == 0) {
        raw.append(chunk);
        if (link_depth > 0) raw_link += chunk.size();
      }
      i = next == std::string_view::npos ? markup.size() : next;
      continue;
    }
    Tag tag;
    const auto after = parse_tag(markup, i, tag);
    if (tag.name.empty() || tag.name[0] == '!') {
      // "<" not starting a tag is text
      if (tag.name.empty() && !tag.closing) {
        if (dropped_depth == 0) raw.push_back('<');
        ++i;
        continue;
      }
      i = after;
      continue;
    }
    i = after;

    if (dropped_depth > 0) {
      if (tag.name == dropped_tag) {
        if (tag.closing) {
          --dropped_depth;
        } else if (!tag.self_closing) {
          ++dropped_depth;
        }
      }
      continue;
    }
    const bool drop = is_dropped(tag.name) || (drop_boilerplate && is_boilerplate(tag.name));
    if (drop && !tag.closing && !tag.self_closing) {
      close_paragraph();
      dropped_depth = 1;
      dropped_tag = tag.name;
      // raw text elements: jump straight to the matching close tag
      if (tag.name == "script" || tag.name == "style") {
        const std::string close = "</" + tag.name;
        std::size_t k = i;
        while (k < markup.size()) {
          k = markup.find("</", k);
          if (k == std::string_view::npos) break;
          std::string probe;
          for (std::size_t m = k; m < markup.size() && m < k + close.size(); ++m)
            probe.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(markup[m]))));
          if (probe == close) break;
          k += 2;
        }
        if (k == std::string_view::npos) k = markup.size();
        i = k;
      }
      continue;
    }
    if (tag.name == "a") {
      if (tag.closing) {
        if (link_depth > 0) --link_depth;
      } else if (!tag.self_closing) {
        ++link_depth;
      }
    }
    if (is_block(tag.name)) close_paragraph();
    if (tag.closing) {
      // pop to the matching element, tolerating unclosed children
      const auto it = std::find(stack.rbegin(), stack.rend(), tag.name);
      if (it != stack.rend()) {
        const auto depth = static_cast<std::size_t>(stack.rend() - it) - 1;
        stack.resize(depth);
        while (container_depth.size() > 1 && container_depth.back() > depth) {
          containers.pop_back();
          container_depth.pop_back();
        }
      }
    } else if (!tag.self_closing && !is_void(tag.name)) {
      stack.push_back(tag.name);
      if (is_container(tag.name)) {
        containers.push_back(next_container++);
        container_depth.push_back(stack.size());
      }
    }
  }
  close_paragraph();
  return out;
}

}  // namespace

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out.push_back(text[i++]);
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(text[i++]);
      continue;
    }
    const auto body = text.substr(i + 1, semi - i - 1);
    char32_t cp = 0;
    bool found = false;
    if (!body.empty() && body[0] == '#') {
      unsigned value = 0;
      const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      const auto digits = body.substr(hex ? 2 : 1);
      const auto [ptr, ec] =
          std::from_chars(digits.data(), digits.data() + digits.size(), value, hex ? 16 : 10);
      if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty() &&
          value > 0 && value <= 0x10FFFF) {
        cp = static_cast<char32_t>(value);
        found = true;
      }
    } else {
      for (const auto& e : kEntities) {
        if (e.name == body) {
          cp = e.cp;
          found = true;
          break;
        }
      }
    }
    if (!found) {
      out.push_back(text[i++]);
      continue;
    }
    utf8::append(out, cp);
    i = semi + 1;
  }
  return out;
}

std::string to_text(std::string_view markup) {
  std::string out;
  for (const auto& p : paragraphs(markup, false)) {
    if (!out.empty()) out += "\n\n";
    out += p.text;
  }
  return out;
}

std::string main_content(std::string_view page) {
  const auto paras = paragraphs(page, true);
  std::map<std::size_t, double> score;
  for (const auto& p : paras) {
    const double chars = static_cast<double>(p.text.size());
    score[p.container] += std::max(0.0, chars - static_cast<double>(p.link_chars));
  }
  std::size_t best = 0;
  double best_score = 0.0;
  for (const auto& [container, s] : score) {
    if (s > best_score) {
      best = container;
      best_score = s;
    }
  }
  if (best_score <= 0.0) return to_text(page);
  std::string out;
  for (const auto& p : paras) {
    if (p.container != best) continue;
    if (!out.empty()) out += "\n\n";
    out += p.text;
  }
  return out;
}

}  // namespace graded::html
