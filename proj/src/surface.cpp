#include "fml/surface.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace fml {

std::string ParseError::render() const {
  std::ostringstream out;
  out << "parse error at " << span.line << ":" << span.column << ": "
      << message;
  if (!expected.empty()) {
    out << " (expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i > 0) out << ", ";
      out << expected[i];
    }
    out << ")";
  }
  return out.str();
}

namespace {

enum class Tok {
  Ident,
  CapIdent,
  IntLit,
  Tilde,
  LParen,
  RParen,
  Arrow,
  Colon,
  Dot,
  Comma,
  Equals,
  KwFun,
  KwLet,
  KwIn,
  KwForall,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  SourceSpan span;
};

const char* tok_name(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::CapIdent: return "constructor";
    case Tok::IntLit: return "integer";
    case Tok::Tilde: return "'~'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Arrow: return "'->'";
    case Tok::Colon: return "':'";
    case Tok::Dot: return "'.'";
    case Tok::Comma: return "','";
    case Tok::Equals: return "'='";
    case Tok::KwFun: return "'fun'";
    case Tok::KwLet: return "'let'";
    case Tok::KwIn: return "'in'";
    case Tok::KwForall: return "'forall'";
    case Tok::End: return "end of input";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Result<std::vector<Token>, ParseError> run() {
    std::vector<Token> out;
    while (true) {
      skip_ws();
      SourceSpan span = here();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::End, "", span});
        return out;
      }
      const char c = src_[pos_];
      if (c == '(') {
        advance();
        out.push_back({Tok::LParen, "(", close(span)});
      } else if (c == ')') {
        advance();
        out.push_back({Tok::RParen, ")", close(span)});
      } else if (c == '~') {
        advance();
        out.push_back({Tok::Tilde, "~", close(span)});
      } else if (c == ':') {
        advance();
        out.push_back({Tok::Colon, ":", close(span)});
      } else if (c == '.') {
        advance();
        out.push_back({Tok::Dot, ".", close(span)});
      } else if (c == ',') {
        advance();
        out.push_back({Tok::Comma, ",", close(span)});
      } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
        advance();
        advance();
        out.push_back({Tok::Arrow, "->", close(span)});
      } else if (starts_with("\xe2\x86\x92")) {  // UTF-8 arrow
        advance();
        advance();
        advance();
        out.push_back({Tok::Arrow, "->", close(span)});
      } else if (c == '=') {
        advance();
        out.push_back({Tok::Equals, "=", close(span)});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::string text;
        while (pos_ < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          text += src_[pos_];
          advance();
        }
        out.push_back({Tok::IntLit, text, close(span)});
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string text;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_' || src_[pos_] == '\'')) {
          text += src_[pos_];
          advance();
        }
        Tok kind = Tok::Ident;
        if (text == "fun") {
          kind = Tok::KwFun;
        } else if (text == "let") {
          kind = Tok::KwLet;
        } else if (text == "in") {
          kind = Tok::KwIn;
        } else if (text == "forall") {
          kind = Tok::KwForall;
        } else if (std::isupper(static_cast<unsigned char>(text[0]))) {
          kind = Tok::CapIdent;
        }
        out.push_back({kind, text, close(span)});
      } else {
        return ParseError{close(span),
                          "unexpected character '" + std::string(1, c) + "'",
                          {}};
      }
    }
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  bool starts_with(std::string_view s) const {
    return src_.substr(pos_, s.size()) == s;
  }

  void advance() {
    if (pos_ < src_.size()) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  SourceSpan here() const {
    return SourceSpan{pos_, pos_, line_, col_};
  }
  SourceSpan close(SourceSpan span) const {
    span.end = pos_;
    return span;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// Lexical scope for type variables while parsing.
class TypeScope {
 public:
  explicit TypeScope(NameSupply& supply) : supply_(supply) {}

  TypeVarName bind(const std::string& text) {
    TypeVarName name = supply_.fresh(text);
    scopes_.emplace_back(text, name);
    return name;
  }
  // Pushes an already-allocated binder (let-annotation quantifiers).
  void rebind(const TypeVarName& name) {
    scopes_.emplace_back(name.text, name);
  }
  void pop() { scopes_.pop_back(); }

  TypeVarName resolve(const std::string& text) {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      if (it->first == text) return it->second;
    }
    auto found = free_.find(text);
    if (found != free_.end()) return found->second;
    TypeVarName name = supply_.fresh(text);
    free_.emplace(text, name);
    return name;
  }

 private:
  NameSupply& supply_;
  std::vector<std::pair<std::string, TypeVarName>> scopes_;
  std::map<std::string, TypeVarName> free_;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, NameSupply& supply)
      : tokens_(std::move(tokens)), scope_(supply) {}

  Result<Term, ParseError> term_entry() {
    auto t = parse_term_();
    if (!t.ok()) return t.error();
    if (auto err = expect(Tok::End)) return *err;
    return t.value();
  }

  Result<Type, ParseError> type_entry() {
    auto t = parse_type_();
    if (!t.ok()) return t.error();
    if (auto err = expect(Tok::End)) return *err;
    return t.value();
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
    return tokens_[i];
  }
  const Token& take() {
    const Token& t = tokens_[std::min(pos_, tokens_.size() - 1)];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return t;
  }
  bool at(Tok kind) const { return peek().kind == kind; }

  std::optional<ParseError> expect(Tok kind) {
    if (!at(kind)) {
      return ParseError{peek().span,
                        std::string("unexpected ") + tok_name(peek().kind),
                        {tok_name(kind)}};
    }
    take();
    return std::nullopt;
  }

  static SourceSpan join(SourceSpan a, SourceSpan b) {
    SourceSpan out = a;
    out.end = std::max(a.end, b.end);
    return out;
  }

  // --- terms ---

  Result<Term, ParseError> parse_term_() {
    if (at(Tok::KwFun)) return parse_fun();
    if (at(Tok::KwLet)) return parse_let();
    return parse_app();
  }

  Result<Term, ParseError> parse_fun() {
    const SourceSpan start = peek().span;
    take();  // fun
    if (at(Tok::LParen)) {
      take();
      if (!at(Tok::Ident)) {
        return ParseError{peek().span, "expected parameter name",
                          {tok_name(Tok::Ident)}};
      }
      std::string param = take().text;
      if (auto err = expect(Tok::Colon)) return *err;
      auto ann = parse_type_();
      if (!ann.ok()) return ann.error();
      if (auto err = expect(Tok::RParen)) return *err;
      if (auto err = expect(Tok::Arrow)) return *err;
      auto body = parse_term_();
      if (!body.ok()) return body.error();
      return make_term(TmLamAnn{param, ann.value(), body.value()},
                       join(start, body.value()->span));
    }
    if (!at(Tok::Ident)) {
      return ParseError{peek().span, "expected parameter name",
                        {tok_name(Tok::Ident), tok_name(Tok::LParen)}};
    }
    std::string param = take().text;
    if (auto err = expect(Tok::Arrow)) return *err;
    auto body = parse_term_();
    if (!body.ok()) return body.error();
    return make_term(TmLam{param, body.value()},
                     join(start, body.value()->span));
  }

  Result<Term, ParseError> parse_let() {
    const SourceSpan start = peek().span;
    take();  // let
    if (at(Tok::LParen)) {
      take();
      if (!at(Tok::Ident)) {
        return ParseError{peek().span, "expected binding name",
                          {tok_name(Tok::Ident)}};
      }
      std::string var = take().text;
      if (auto err = expect(Tok::Colon)) return *err;
      auto ann = parse_type_();
      if (!ann.ok()) return ann.error();
      if (auto err = expect(Tok::RParen)) return *err;
      if (auto err = expect(Tok::Equals)) return *err;
      // Annotation quantifiers scope over the bound term; wf_term rules on
      // whether the term may actually use them (split).
      auto [prefix, body_type] = strip_forall_prefix(ann.value());
      std::size_t pushed = 0;
      for (const auto& binder : prefix) {
        scope_rebind(binder);
        ++pushed;
      }
      auto bound = parse_term_();
      for (std::size_t i = 0; i < pushed; ++i) scope_.pop();
      if (!bound.ok()) return bound.error();
      if (auto err = expect(Tok::KwIn)) return *err;
      auto body = parse_term_();
      if (!body.ok()) return body.error();
      return make_term(
          TmLetAnn{var, ann.value(), bound.value(), body.value()},
          join(start, body.value()->span));
    }
    if (!at(Tok::Ident)) {
      return ParseError{peek().span, "expected binding name",
                        {tok_name(Tok::Ident), tok_name(Tok::LParen)}};
    }
    std::string var = take().text;
    if (auto err = expect(Tok::Equals)) return *err;
    auto bound = parse_term_();
    if (!bound.ok()) return bound.error();
    if (auto err = expect(Tok::KwIn)) return *err;
    auto body = parse_term_();
    if (!body.ok()) return body.error();
    return make_term(TmLet{var, bound.value(), body.value()},
                     join(start, body.value()->span));
  }

  Result<Term, ParseError> parse_app() {
    auto head = parse_atom();
    if (!head.ok()) return head;
    Term out = head.value();
    while (at(Tok::Ident) || at(Tok::IntLit) || at(Tok::Tilde) ||
           at(Tok::LParen)) {
      auto arg = parse_atom();
      if (!arg.ok()) return arg;
      out = make_term(TmApp{out, arg.value()},
                      join(out->span, arg.value()->span));
    }
    return out;
  }

  Result<Term, ParseError> parse_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Ident:
      case Tok::IntLit: {
        take();
        return make_term(TmVar{t.text}, t.span);
      }
      case Tok::Tilde: {
        take();
        if (!at(Tok::Ident) && !at(Tok::IntLit)) {
          return ParseError{peek().span, "'~' must be followed by a variable",
                            {tok_name(Tok::Ident)}};
        }
        const Token& v = take();
        return make_term(TmFrozen{v.text}, join(t.span, v.span));
      }
      case Tok::LParen: {
        take();
        auto inner = parse_term_();
        if (!inner.ok()) return inner;
        if (auto err = expect(Tok::RParen)) return *err;
        return inner.value();
      }
      default:
        return ParseError{t.span,
                          std::string("unexpected ") + tok_name(t.kind),
                          {"term"}};
    }
  }

  // --- types ---

  Result<Type, ParseError> parse_type_() {
    if (at(Tok::KwForall)) {
      take();
      if (!at(Tok::Ident)) {
        return ParseError{peek().span, "expected type variable after 'forall'",
                          {tok_name(Tok::Ident)}};
      }
      std::string text = take().text;
      if (auto err = expect(Tok::Dot)) return *err;
      TypeVarName binder = scope_.bind(text);
      auto body = parse_type_();
      scope_.pop();
      if (!body.ok()) return body;
      return make_forall(binder, body.value());
    }
    auto lhs = parse_type_app();
    if (!lhs.ok()) return lhs;
    if (at(Tok::Arrow)) {
      take();
      auto rhs = parse_type_();  // right-associative
      if (!rhs.ok()) return rhs;
      return make_arrow(lhs.value(), rhs.value());
    }
    return lhs;
  }

  Result<Type, ParseError> parse_type_app() {
    if (at(Tok::CapIdent)) {
      const Token& t = peek();
      const auto& table = ConstructorTable::builtins();
      if (!table.known(t.text)) {
        return ParseError{t.span, "unknown type constructor '" + t.text + "'",
                          {}};
      }
      take();
      const int arity = table.arity(t.text);
      if (arity == 0) return make_base(t.text);
      std::vector<Type> args;
      for (int i = 0; i < arity; ++i) {
        if (!(at(Tok::Ident) || at(Tok::CapIdent) || at(Tok::LParen))) {
          return ParseError{peek().span,
                            "type constructor '" + t.text + "' expects " +
                                std::to_string(arity) + " argument(s)",
                            {"type"}};
        }
        auto arg = parse_type_atom();
        if (!arg.ok()) return arg;
        args.push_back(arg.value());
      }
      return make_ctor(t.text, std::move(args));
    }
    return parse_type_atom();
  }

  Result<Type, ParseError> parse_type_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Ident: {
        take();
        return make_var(scope_.resolve(t.text));
      }
      case Tok::CapIdent: {
        const auto& table = ConstructorTable::builtins();
        if (!table.known(t.text)) {
          return ParseError{t.span,
                            "unknown type constructor '" + t.text + "'",
                            {}};
        }
        if (table.arity(t.text) != 0) {
          return ParseError{t.span,
                            "type constructor '" + t.text + "' expects " +
                                std::to_string(table.arity(t.text)) +
                                " argument(s)",
                            {}};
        }
        take();
        return make_base(t.text);
      }
      case Tok::LParen: {
        take();
        auto first = parse_type_();
        if (!first.ok()) return first;
        if (at(Tok::Comma)) {
          take();
          auto second = parse_type_();
          if (!second.ok()) return second;
          if (auto err = expect(Tok::RParen)) return *err;
          return make_prod(first.value(), second.value());
        }
        if (auto err = expect(Tok::RParen)) return *err;
        return first.value();
      }
      default:
        return ParseError{t.span,
                          std::string("unexpected ") + tok_name(t.kind),
                          {"type"}};
    }
  }

  // Re-binds an already-allocated binder name in the lexical scope (used for
  // let-annotation quantifiers scoping over the bound term).
  void scope_rebind(const TypeVarName& binder) { scope_.rebind(binder); }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  TypeScope scope_;
};

}  // namespace

Result<Term, ParseError> parse_term(std::string_view src, NameSupply& supply) {
  auto tokens = Lexer(src).run();
  if (!tokens.ok()) return tokens.error();
  return Parser(std::move(tokens.value()), supply).term_entry();
}

Result<Type, ParseError> parse_type(std::string_view src, NameSupply& supply) {
  auto tokens = Lexer(src).run();
  if (!tokens.ok()) return tokens.error();
  return Parser(std::move(tokens.value()), supply).type_entry();
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

// Assigns display names: free variables keep their text (primed on clashes),
// binders get letters in first-use order.
class TypeNamer {
 public:
  TypeNamer(const Type& t, const PrintOptions& opts) {
    for (const auto& v : ftv_ordered(t)) {
      auto over = opts.var_names.find(v.uid);
      std::string name =
          over != opts.var_names.end() ? over->second : v.text;
      while (!taken_.insert(name).second) name += "'";
      names_[v.uid] = name;
    }
    assign_binders(t);
  }

  const std::string& name(const TypeVarName& v) const {
    static const std::string unknown = "?";
    auto it = names_.find(v.uid);
    return it != names_.end() ? it->second : unknown;
  }

 private:
  void assign_binders(const Type& t) {
    if (const auto* c = as_ctor(t)) {
      for (const auto& arg : c->args) assign_binders(arg);
      return;
    }
    if (const auto* f = as_forall(t)) {
      if (!names_.count(f->binder.uid)) {
        names_[f->binder.uid] = next_letter();
      }
      assign_binders(f->body);
    }
  }

  std::string next_letter() {
    while (true) {
      std::string name;
      const int idx = counter_++;
      name += static_cast<char>('a' + idx % 26);
      if (idx >= 26) name += std::to_string(idx / 26);
      if (taken_.insert(name).second) return name;
    }
  }

  std::map<std::int64_t, std::string> names_;
  std::set<std::string> taken_;
  int counter_ = 0;
};

enum class TypePrec { Top, Arrow, App, Atom };

void print_type_walk(const Type& t, const TypeNamer& namer, TypePrec prec,
                     std::string& out) {
  if (const auto* v = as_var(t)) {
    out += namer.name(v->name);
    return;
  }
  if (const auto* f = as_forall(t)) {
    const bool parens = prec != TypePrec::Top;
    if (parens) out += "(";
    out += "forall " + namer.name(f->binder) + ". ";
    print_type_walk(f->body, namer, TypePrec::Top, out);
    if (parens) out += ")";
    return;
  }
  const auto& c = std::get<TCtor>(t->v);
  if (c.ctor == kArrowCtor) {
    const bool parens = prec == TypePrec::App || prec == TypePrec::Atom;
    if (parens) out += "(";
    print_type_walk(c.args[0], namer, TypePrec::App, out);
    out += " -> ";
    print_type_walk(c.args[1], namer,
                    parens ? TypePrec::Top : TypePrec::Arrow, out);
    if (parens) out += ")";
    return;
  }
  if (c.ctor == kProdCtor) {
    out += "(";
    print_type_walk(c.args[0], namer, TypePrec::Top, out);
    out += ", ";
    print_type_walk(c.args[1], namer, TypePrec::Top, out);
    out += ")";
    return;
  }
  if (c.args.empty()) {
    out += c.ctor;
    return;
  }
  const bool parens = prec == TypePrec::Atom;
  if (parens) out += "(";
  out += c.ctor;
  for (const auto& arg : c.args) {
    out += " ";
    print_type_walk(arg, namer, TypePrec::Atom, out);
  }
  if (parens) out += ")";
}

enum class TermPrec { Top, App, Atom };

void print_term_walk(const Term& m, TermPrec prec, std::string& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, TmVar>) {
          out += node.var;
        } else if constexpr (std::is_same_v<T, TmFrozen>) {
          out += "~" + node.var;
        } else if constexpr (std::is_same_v<T, TmApp>) {
          const bool parens = prec == TermPrec::Atom;
          if (parens) out += "(";
          print_term_walk(node.fn, TermPrec::App, out);
          out += " ";
          print_term_walk(node.arg, TermPrec::Atom, out);
          if (parens) out += ")";
        } else if constexpr (std::is_same_v<T, TmLam>) {
          const bool parens = prec != TermPrec::Top;
          if (parens) out += "(";
          out += "fun " + node.param + " -> ";
          print_term_walk(node.body, TermPrec::Top, out);
          if (parens) out += ")";
        } else if constexpr (std::is_same_v<T, TmLamAnn>) {
          const bool parens = prec != TermPrec::Top;
          if (parens) out += "(";
          out += "fun (" + node.param + " : " + print_type(node.ann) + ") -> ";
          print_term_walk(node.body, TermPrec::Top, out);
          if (parens) out += ")";
        } else if constexpr (std::is_same_v<T, TmLet>) {
          const bool parens = prec != TermPrec::Top;
          if (parens) out += "(";
          out += "let " + node.var + " = ";
          print_term_walk(node.bound, TermPrec::Top, out);
          out += " in ";
          print_term_walk(node.body, TermPrec::Top, out);
          if (parens) out += ")";
        } else if constexpr (std::is_same_v<T, TmLetAnn>) {
          const bool parens = prec != TermPrec::Top;
          if (parens) out += "(";
          out += "let (" + node.var + " : " + print_type(node.ann) + ") = ";
          print_term_walk(node.bound, TermPrec::Top, out);
          out += " in ";
          print_term_walk(node.body, TermPrec::Top, out);
          if (parens) out += ")";
        }
      },
      m->v);
}

}  // namespace

std::string print_type(const Type& t, const PrintOptions& opts) {
  TypeNamer namer(t, opts);
  std::string out;
  print_type_walk(t, namer, TypePrec::Top, out);
  return out;
}

std::string print_term(const Term& m) {
  std::string out;
  print_term_walk(m, TermPrec::Top, out);
  return out;
}

}  // namespace fml
