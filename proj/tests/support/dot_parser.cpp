#include "dot_parser.hpp"

#include <algorithm>
#include <cctype>

namespace relcap::testkit {

namespace {

enum class Tok { kId, kLBrace, kRBrace, kLBracket, kRBracket, kEq, kSemi, kComma, kColon, kEdgeOp, kEnd };

struct Token {
  Tok kind;
  std::string text;  // unescaped for quoted IDs
  bool keyword_ok;   // false for quoted IDs (never keywords)
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  Token next() {
    skip_space_and_comments();
    if (i_ >= s_.size()) return {Tok::kEnd, "", false};
    const char c = s_[i_];
    switch (c) {
      case '{': ++i_; return {Tok::kLBrace, "{", false};
      case '}': ++i_; return {Tok::kRBrace, "}", false};
      case '[': ++i_; return {Tok::kLBracket, "[", false};
      case ']': ++i_; return {Tok::kRBracket, "]", false};
      case '=': ++i_; return {Tok::kEq, "=", false};
      case ';': ++i_; return {Tok::kSemi, ";", false};
      case ',': ++i_; return {Tok::kComma, ",", false};
      case ':': ++i_; return {Tok::kColon, ":", false};
      default: break;
    }
    if (c == '-' && i_ + 1 < s_.size() && (s_[i_ + 1] == '>' || s_[i_ + 1] == '-')) {
      std::string op(s_.substr(i_, 2));
      i_ += 2;
      return {Tok::kEdgeOp, op, false};
    }
    if (c == '"') return quoted();
    if (c == '<') throw DotSyntaxError("HTML strings are not supported");
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80) {
      std::size_t b = i_;
      while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' ||
                                static_cast<unsigned char>(s_[i_]) >= 0x80)) {
        ++i_;
      }
      return {Tok::kId, std::string(s_.substr(b, i_ - b)), true};
    }
    if (c == '-' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t b = i_;
      if (s_[i_] == '-') ++i_;
      bool digits = false, dot = false;
      while (i_ < s_.size()) {
        if (std::isdigit(static_cast<unsigned char>(s_[i_]))) {
          digits = true;
        } else if (s_[i_] == '.' && !dot) {
          dot = true;
        } else {
          break;
        }
        ++i_;
      }
      if (!digits) throw DotSyntaxError("malformed numeral at offset " + std::to_string(b));
      return {Tok::kId, std::string(s_.substr(b, i_ - b)), false};
    }
    throw DotSyntaxError(std::string("unexpected character '") + c + "' at offset " + std::to_string(i_));
  }

 private:
  void skip_space_and_comments() {
    while (i_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[i_]))) {
        ++i_;
      } else if (s_.substr(i_, 2) == "//" || (s_[i_] == '#' && (i_ == 0 || s_[i_ - 1] == '\n'))) {
        while (i_ < s_.size() && s_[i_] != '\n') ++i_;
      } else if (s_.substr(i_, 2) == "/*") {
        auto end = s_.find("*/", i_ + 2);
        if (end == std::string_view::npos) throw DotSyntaxError("unterminated comment");
        i_ = end + 2;
      } else {
        break;
      }
    }
  }

  Token quoted() {
    ++i_;
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) {
        const char e = s_[i_ + 1];
        if (e == '"') {
          out.push_back('"');
        } else if (e == '\n') {
          // line continuation
        } else {
          out.push_back('\\');
          out.push_back(e);
        }
        i_ += 2;
        continue;
      }
      out.push_back(s_[i_++]);
    }
    if (i_ >= s_.size()) throw DotSyntaxError("unterminated string");
    ++i_;
    return {Tok::kId, out, false};
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) { advance(); }

  DotGraph graph() {
    if (is_keyword("strict")) {
      g_.strict = true;
      advance();
    }
    if (is_keyword("digraph")) {
      g_.directed = true;
    } else if (!is_keyword("graph")) {
      fail("expected 'graph' or 'digraph'");
    }
    advance();
    if (cur_.kind == Tok::kId) {
      g_.name = cur_.text;
      advance();
    }
    expect(Tok::kLBrace, "'{'");
    stmt_list();
    expect(Tok::kRBrace, "'}'");
    if (cur_.kind != Tok::kEnd) fail("trailing content after graph");
    return g_;
  }

 private:
  void advance() { cur_ = lex_.next(); }
  bool is_keyword(const char* kw) const { return cur_.kind == Tok::kId && cur_.keyword_ok && lower(cur_.text) == kw; }
  [[noreturn]] void fail(const std::string& what) const {
    throw DotSyntaxError(what + " (at '" + cur_.text + "')");
  }
  void expect(Tok kind, const char* what) {
    if (cur_.kind != kind) fail(std::string("expected ") + what);
    advance();
  }
  std::string id() {
    if (cur_.kind != Tok::kId) fail("expected ID");
    std::string s = cur_.text;
    advance();
    return s;
  }

  void stmt_list() {
    while (cur_.kind != Tok::kRBrace && cur_.kind != Tok::kEnd) {
      stmt();
      if (cur_.kind == Tok::kSemi) advance();
    }
  }

  void stmt() {
    if (is_keyword("graph") || is_keyword("node") || is_keyword("edge")) {
      advance();
      std::map<std::string, std::string> ignored;
      if (cur_.kind != Tok::kLBracket) fail("expected attribute list");
      attr_list(ignored);
      return;
    }
    std::vector<std::string> lhs = endpoint();
    if (cur_.kind == Tok::kEq) {
      advance();
      id();
      return;
    }
    if (cur_.kind == Tok::kEdgeOp) {
      std::vector<std::vector<std::string>> chain{lhs};
      while (cur_.kind == Tok::kEdgeOp) {
        if ((cur_.text == "->") != g_.directed) fail("edge operator does not match graph type");
        advance();
        chain.push_back(endpoint());
      }
      std::map<std::string, std::string> attrs;
      if (cur_.kind == Tok::kLBracket) attr_list(attrs);
      for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        for (const auto& a : chain[i]) {
          for (const auto& b : chain[i + 1]) g_.edges.push_back({a, b, attrs});
        }
      }
      return;
    }
    if (lhs.size() != 1) fail("subgraph cannot take attributes here");
    auto& attrs = g_.node_attrs[lhs.front()];
    if (cur_.kind == Tok::kLBracket) attr_list(attrs);
  }

  // node_id or subgraph; returns the node ids it denotes
  std::vector<std::string> endpoint() {
    if (is_keyword("subgraph") || cur_.kind == Tok::kLBrace) {
      if (is_keyword("subgraph")) {
        advance();
        if (cur_.kind == Tok::kId) advance();
      }
      const std::size_t before = g_.nodes.size();
      expect(Tok::kLBrace, "'{'");
      stmt_list();
      expect(Tok::kRBrace, "'}'");
      return {g_.nodes.begin() + static_cast<long>(before), g_.nodes.end()};
    }
    std::string name = id();
    if (cur_.kind == Tok::kColon) {
      advance();
      id();
      if (cur_.kind == Tok::kColon) {
        advance();
        id();
      }
    }
    if (std::find(g_.nodes.begin(), g_.nodes.end(), name) == g_.nodes.end()) g_.nodes.push_back(name);
    return {name};
  }

  void attr_list(std::map<std::string, std::string>& out) {
    while (cur_.kind == Tok::kLBracket) {
      advance();
      while (cur_.kind == Tok::kId) {
        std::string key = id();
        expect(Tok::kEq, "'='");
        out[key] = id();
        if (cur_.kind == Tok::kSemi || cur_.kind == Tok::kComma) advance();
      }
      expect(Tok::kRBracket, "']'");
    }
  }

  Lexer lex_;
  Token cur_{Tok::kEnd, "", false};
  DotGraph g_;
};

}  // namespace

DotGraph parse_dot(std::string_view text) { return Parser(text).graph(); }

}  // namespace relcap::testkit
