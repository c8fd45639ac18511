#include "dl/parse.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

namespace dl {

namespace {

enum class Tok {
  End,
  Newline,
  Int,
  Float,
  Ident,
  // keywords
  Function,
  For,
  While,
  If,
  Else,
  In,
  Return,
  True,
  False,
  // punctuation / operators
  Arrow,  // <-
  LParen,
  RParen,
  LBrace,
  RBrace,
  LLBracket,  // [[
  RRBracket,  // ]]
  Comma,
  Colon,
  Plus,
  Minus,
  Star,
  Slash,
  EqEq,
  Lt,
  Le,
  Gt,
  Ge,
};

struct Token {
  Tok kind;
  std::string text;
  int64_t int_val = 0;
  double float_val = 0;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    int depth = 0;  // paren/bracket nesting; newlines inside are ignored
    while (true) {
      skip_ws_and_comments();
      Token t = next();
      if (t.kind == Tok::LParen || t.kind == Tok::LLBracket) depth++;
      if (t.kind == Tok::RParen || t.kind == Tok::RRBracket)
        depth = std::max(0, depth - 1);
      if (t.kind == Tok::Newline && depth > 0) continue;
      if (t.kind == Tok::Newline && (out.empty() || out.back().kind == Tok::Newline))
        continue;
      out.push_back(t);
      if (t.kind == Tok::End) break;
    }
    return out;
  }

 private:
  void skip_ws_and_comments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  Token next() {
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) {
      t.kind = Tok::End;
      return t;
    }
    char c = src_[pos_];
    if (c == '\n' || c == ';') {
      advance();
      t.kind = Tok::Newline;
      return t;
    }
    if (std::isdigit((unsigned char)c)) return number(t);
    if (std::isalpha((unsigned char)c) || c == '_' || c == '.') return ident(t);
    advance();
    switch (c) {
      case '(': t.kind = Tok::LParen; return t;
      case ')': t.kind = Tok::RParen; return t;
      case '{': t.kind = Tok::LBrace; return t;
      case '}': t.kind = Tok::RBrace; return t;
      case ',': t.kind = Tok::Comma; return t;
      case ':': t.kind = Tok::Colon; return t;
      case '+': t.kind = Tok::Plus; return t;
      case '*': t.kind = Tok::Star; return t;
      case '/': t.kind = Tok::Slash; return t;
      case '-': t.kind = Tok::Minus; return t;
      case '[':
        if (peek() == '[') {
          advance();
          t.kind = Tok::LLBracket;
          return t;
        }
        throw SyntaxError(t.line, t.col, "single '[' indexing is not supported");
      case ']':
        if (peek() == ']') {
          advance();
          t.kind = Tok::RRBracket;
          return t;
        }
        throw SyntaxError(t.line, t.col, "unmatched ']'");
      case '=':
        if (peek() == '=') {
          advance();
          t.kind = Tok::EqEq;
          return t;
        }
        throw SyntaxError(t.line, t.col, "assignment uses '<-', not '='");
      case '<':
        // '<-' is lexed greedily, as in R.
        if (peek() == '-') {
          advance();
          t.kind = Tok::Arrow;
          return t;
        }
        if (peek() == '=') {
          advance();
          t.kind = Tok::Le;
          return t;
        }
        t.kind = Tok::Lt;
        return t;
      case '>':
        if (peek() == '=') {
          advance();
          t.kind = Tok::Ge;
          return t;
        }
        t.kind = Tok::Gt;
        return t;
      default:
        throw SyntaxError(t.line, t.col,
                          std::string("unexpected character '") + c + "'");
    }
  }

  Token number(Token t) {
    size_t start = pos_;
    bool is_float = false;
    while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_]))
      advance();
    if (pos_ < src_.size() && src_[pos_] == '.' && pos_ + 1 < src_.size() &&
        std::isdigit((unsigned char)src_[pos_ + 1])) {
      is_float = true;
      advance();
      while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_]))
        advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      size_t save = pos_;
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
        advance();
      if (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) {
        is_float = true;
        while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_]))
          advance();
      } else {
        pos_ = save;  // not an exponent; 'e' starts an identifier
      }
    }
    std::string text = src_.substr(start, pos_ - start);
    if (pos_ < src_.size() && src_[pos_] == 'L' && !is_float) {
      advance();
    }
    if (is_float) {
      t.kind = Tok::Float;
      t.float_val = std::strtod(text.c_str(), nullptr);
    } else {
      t.kind = Tok::Int;
      errno = 0;
      t.int_val = std::strtoll(text.c_str(), nullptr, 10);
      if (errno == ERANGE)
        throw SyntaxError(t.line, t.col, "integer literal out of range");
    }
    t.text = text;
    return t;
  }

  Token ident(Token t) {
    size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_' ||
            src_[pos_] == '.'))
      advance();
    t.text = src_.substr(start, pos_ - start);
    if (t.text == "function") t.kind = Tok::Function;
    else if (t.text == "for") t.kind = Tok::For;
    else if (t.text == "while") t.kind = Tok::While;
    else if (t.text == "if") t.kind = Tok::If;
    else if (t.text == "else") t.kind = Tok::Else;
    else if (t.text == "in") t.kind = Tok::In;
    else if (t.text == "return") t.kind = Tok::Return;
    else if (t.text == "TRUE") t.kind = Tok::True;
    else if (t.text == "FALSE") t.kind = Tok::False;
    else t.kind = Tok::Ident;
    return t;
  }

  char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }

  void advance() {
    if (src_[pos_] == '\n') {
      line_++;
      col_ = 1;
    } else {
      col_++;
    }
    pos_++;
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program run() {
    Program p;
    skip_newlines();
    while (!at(Tok::End)) {
      p.stmts.push_back(statement());
      end_of_statement();
    }
    return p;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& peek(int n = 1) const {
    size_t i = pos_ + n;
    return toks_[std::min(i, toks_.size() - 1)];
  }
  bool at(Tok k) const { return cur().kind == k; }

  Token eat(Tok k, const char* what) {
    if (!at(k))
      throw SyntaxError(cur().line, cur().col,
                        std::string("expected ") + what);
    return toks_[pos_++];
  }

  bool accept(Tok k) {
    if (at(k)) {
      pos_++;
      return true;
    }
    return false;
  }

  void skip_newlines() {
    while (at(Tok::Newline)) pos_++;
  }

  void end_of_statement() {
    if (at(Tok::End) || at(Tok::RBrace)) return;
    if (!at(Tok::Newline))
      throw SyntaxError(cur().line, cur().col,
                        "expected newline or ';' after statement");
    skip_newlines();
  }

  StmtP statement() {
    switch (cur().kind) {
      case Tok::If: return if_stmt();
      case Tok::While: return while_stmt();
      case Tok::For: return for_stmt();
      case Tok::Return: return return_stmt();
      default: break;
    }
    if (at(Tok::Ident) && peek().kind == Tok::Arrow) {
      if (peek(2).kind == Tok::Function) return func_def();
      return assign_stmt();
    }
    if (at(Tok::Ident) && peek().kind == Tok::LLBracket) {
      // Could be an index assignment or an index-read expression statement;
      // scan ahead for '<-' after the matching ']]'.
      if (is_index_assign()) return index_assign_stmt();
    }
    auto s = make_stmt(Stmt::Kind::ExprStmt);
    s->e1 = expression();
    return s;
  }

  bool is_index_assign() const {
    size_t i = pos_ + 1;  // at '[['
    int depth = 0;
    for (; i < toks_.size(); i++) {
      Tok k = toks_[i].kind;
      if (k == Tok::LLBracket) depth++;
      else if (k == Tok::RRBracket) {
        depth--;
        if (depth == 0) return i + 1 < toks_.size() &&
                               toks_[i + 1].kind == Tok::Arrow;
      } else if (k == Tok::Newline || k == Tok::End) {
        return false;
      }
    }
    return false;
  }

  StmtP make_stmt(Stmt::Kind k) {
    auto s = std::make_unique<Stmt>();
    s->kind = k;
    s->line = cur().line;
    s->col = cur().col;
    return s;
  }

  ExprP make_expr(Expr::Kind k) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->line = cur().line;
    e->col = cur().col;
    return e;
  }

  StmtP assign_stmt() {
    auto s = make_stmt(Stmt::Kind::Assign);
    s->name = eat(Tok::Ident, "identifier").text;
    eat(Tok::Arrow, "'<-'");
    s->e1 = expression();
    return s;
  }

  StmtP index_assign_stmt() {
    auto s = make_stmt(Stmt::Kind::IndexAssign);
    s->name = eat(Tok::Ident, "identifier").text;
    eat(Tok::LLBracket, "'[['");
    s->e1 = expression();
    eat(Tok::RRBracket, "']]'");
    eat(Tok::Arrow, "'<-'");
    s->e2 = expression();
    return s;
  }

  StmtP func_def() {
    auto s = make_stmt(Stmt::Kind::FuncDef);
    s->name = eat(Tok::Ident, "identifier").text;
    eat(Tok::Arrow, "'<-'");
    eat(Tok::Function, "'function'");
    eat(Tok::LParen, "'('");
    if (!at(Tok::RParen)) {
      do {
        s->params.push_back(eat(Tok::Ident, "parameter name").text);
      } while (accept(Tok::Comma));
    }
    eat(Tok::RParen, "')'");
    s->body = braced_block();
    return s;
  }

  std::vector<StmtP> braced_block() {
    eat(Tok::LBrace, "'{'");
    std::vector<StmtP> out;
    skip_newlines();
    while (!at(Tok::RBrace)) {
      if (at(Tok::End))
        throw SyntaxError(cur().line, cur().col, "unterminated block");
      out.push_back(statement());
      end_of_statement();
    }
    eat(Tok::RBrace, "'}'");
    return out;
  }

  // A loop or if body: either a braced block or a single statement.
  std::vector<StmtP> body() {
    skip_newlines();
    if (at(Tok::LBrace)) return braced_block();
    std::vector<StmtP> out;
    out.push_back(statement());
    return out;
  }

  StmtP if_stmt() {
    auto s = make_stmt(Stmt::Kind::If);
    eat(Tok::If, "'if'");
    eat(Tok::LParen, "'('");
    s->e1 = expression();
    eat(Tok::RParen, "')'");
    s->body = body();
    // 'else' may appear after the newline that closes the then-branch.
    size_t save = pos_;
    skip_newlines();
    if (accept(Tok::Else)) {
      s->else_body = body();
    } else {
      pos_ = save;
    }
    return s;
  }

  StmtP while_stmt() {
    auto s = make_stmt(Stmt::Kind::While);
    eat(Tok::While, "'while'");
    eat(Tok::LParen, "'('");
    s->e1 = expression();
    eat(Tok::RParen, "')'");
    s->body = body();
    return s;
  }

  StmtP for_stmt() {
    auto s = make_stmt(Stmt::Kind::For);
    eat(Tok::For, "'for'");
    eat(Tok::LParen, "'('");
    s->name = eat(Tok::Ident, "loop variable").text;
    eat(Tok::In, "'in'");
    s->e1 = range_operand();
    eat(Tok::Colon, "':' (for ranges are lo:hi)");
    s->e2 = range_operand();
    eat(Tok::RParen, "')'");
    s->body = body();
    return s;
  }

  // Range endpoints bind tighter than ':': additive expressions without
  // comparisons, which matches R's precedence for a:b.
  ExprP range_operand() { return additive(); }

  StmtP return_stmt() {
    auto s = make_stmt(Stmt::Kind::Return);
    eat(Tok::Return, "'return'");
    eat(Tok::LParen, "'('");
    s->e1 = expression();
    eat(Tok::RParen, "')'");
    return s;
  }

  ExprP expression() { return comparison(); }

  ExprP comparison() {
    ExprP lhs = additive();
    while (at(Tok::EqEq) || at(Tok::Lt) || at(Tok::Le) || at(Tok::Gt) ||
           at(Tok::Ge)) {
      Tok k = cur().kind;
      auto e = make_expr(Expr::Kind::Binary);
      pos_++;
      ExprP rhs = additive();
      if (k == Tok::Gt || k == Tok::Ge) {
        // a > b desugars to b < a, a >= b to b <= a.
        e->op = k == Tok::Gt ? BinOp::Lt : BinOp::Le;
        e->lhs = std::move(rhs);
        e->rhs = std::move(lhs);
      } else {
        e->op = k == Tok::EqEq ? BinOp::Eq : k == Tok::Lt ? BinOp::Lt : BinOp::Le;
        e->lhs = std::move(lhs);
        e->rhs = std::move(rhs);
      }
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprP additive() {
    ExprP lhs = multiplicative();
    while (at(Tok::Plus) || at(Tok::Minus)) {
      auto e = make_expr(Expr::Kind::Binary);
      e->op = at(Tok::Plus) ? BinOp::Add : BinOp::Sub;
      pos_++;
      e->lhs = std::move(lhs);
      e->rhs = multiplicative();
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprP multiplicative() {
    ExprP lhs = unary();
    while (at(Tok::Star) || at(Tok::Slash)) {
      auto e = make_expr(Expr::Kind::Binary);
      e->op = at(Tok::Star) ? BinOp::Mul : BinOp::Div;
      pos_++;
      e->lhs = std::move(lhs);
      e->rhs = unary();
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprP unary() {
    if (at(Tok::Minus)) {
      // Negative literals stay literals; everything else desugars to 0 - e.
      auto line = cur().line, col = cur().col;
      pos_++;
      if (at(Tok::Int)) {
        auto e = make_expr(Expr::Kind::IntLit);
        e->int_val = -cur().int_val;
        pos_++;
        return postfix_tail(std::move(e));
      }
      if (at(Tok::Float)) {
        auto e = make_expr(Expr::Kind::FloatLit);
        e->float_val = -cur().float_val;
        pos_++;
        return postfix_tail(std::move(e));
      }
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->line = line;
      e->col = col;
      e->op = BinOp::Sub;
      e->lhs = std::make_unique<Expr>();
      e->lhs->kind = Expr::Kind::IntLit;
      e->lhs->line = line;
      e->lhs->col = col;
      e->rhs = unary();
      return e;
    }
    return postfix();
  }

  ExprP postfix() { return postfix_tail(primary()); }

  ExprP postfix_tail(ExprP e) {
    while (true) {
      if (at(Tok::LLBracket)) {
        auto idx = make_expr(Expr::Kind::Index);
        pos_++;
        idx->lhs = std::move(e);
        idx->rhs = expression();
        eat(Tok::RRBracket, "']]'");
        e = std::move(idx);
      } else if (at(Tok::LParen)) {
        e = call_tail(std::move(e));
      } else {
        return e;
      }
    }
  }

  ExprP call_tail(ExprP callee) {
    auto call = make_expr(Expr::Kind::Call);
    eat(Tok::LParen, "'('");
    if (!at(Tok::RParen)) {
      do {
        call->args.push_back(expression());
      } while (accept(Tok::Comma));
    }
    eat(Tok::RParen, "')'");
    if (callee->kind == Expr::Kind::Var) {
      // Builtins are resolved syntactically; they cannot be shadowed.
      if (callee->name == "c") {
        call->kind = Expr::Kind::Concat;
        return call;
      }
      if (callee->name == "length" || callee->name == "print") {
        if (call->args.size() != 1)
          throw SyntaxError(callee->line, callee->col,
                            callee->name + "() takes exactly one argument");
        call->kind = callee->name == "length" ? Expr::Kind::Length
                                              : Expr::Kind::Print;
        return call;
      }
    }
    call->callee = std::move(callee);
    return call;
  }

  ExprP primary() {
    switch (cur().kind) {
      case Tok::Int: {
        auto e = make_expr(Expr::Kind::IntLit);
        e->int_val = cur().int_val;
        pos_++;
        return e;
      }
      case Tok::Float: {
        auto e = make_expr(Expr::Kind::FloatLit);
        e->float_val = cur().float_val;
        pos_++;
        return e;
      }
      case Tok::True:
      case Tok::False: {
        auto e = make_expr(Expr::Kind::BoolLit);
        e->bool_val = at(Tok::True);
        pos_++;
        return e;
      }
      case Tok::Ident: {
        auto e = make_expr(Expr::Kind::Var);
        e->name = cur().text;
        pos_++;
        return e;
      }
      case Tok::LParen: {
        pos_++;
        ExprP e = expression();
        eat(Tok::RParen, "')'");
        return e;
      }
      default:
        throw SyntaxError(cur().line, cur().col,
                          "expected an expression, got '" +
                              (cur().kind == Tok::End ? "end of input"
                                                      : cur().text) +
                              "'");
    }
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

void render_expr(const Expr& e, std::ostream& os);

void render_args(const std::vector<ExprP>& args, std::ostream& os) {
  os << "(";
  for (size_t i = 0; i < args.size(); i++) {
    if (i) os << ", ";
    render_expr(*args[i], os);
  }
  os << ")";
}

void render_expr(const Expr& e, std::ostream& os) {
  switch (e.kind) {
    case Expr::Kind::IntLit: os << e.int_val << "L"; break;
    case Expr::Kind::FloatLit: {
      std::string t = render_double(e.float_val);
      // Keep the literal lexically a float so the rendering re-parses as one.
      if (t.find_first_of(".e") == std::string::npos) t += ".0";
      os << t;
      break;
    }
    case Expr::Kind::BoolLit: os << (e.bool_val ? "TRUE" : "FALSE"); break;
    case Expr::Kind::Var: os << e.name; break;
    case Expr::Kind::Binary:
      os << "(";
      render_expr(*e.lhs, os);
      os << " " << binop_name(e.op) << " ";
      render_expr(*e.rhs, os);
      os << ")";
      break;
    case Expr::Kind::Index:
      render_expr(*e.lhs, os);
      os << "[[";
      render_expr(*e.rhs, os);
      os << "]]";
      break;
    case Expr::Kind::Call:
      render_expr(*e.callee, os);
      render_args(e.args, os);
      break;
    case Expr::Kind::Concat:
      os << "c";
      render_args(e.args, os);
      break;
    case Expr::Kind::Length:
      os << "length";
      render_args(e.args, os);
      break;
    case Expr::Kind::Print:
      os << "print";
      render_args(e.args, os);
      break;
  }
}

void render_stmt(const Stmt& s, std::ostream& os, int indent);

void render_block(const std::vector<StmtP>& body, std::ostream& os,
                  int indent) {
  os << "{\n";
  for (const auto& st : body) render_stmt(*st, os, indent + 1);
  for (int i = 0; i < indent; i++) os << "  ";
  os << "}";
}

void render_stmt(const Stmt& s, std::ostream& os, int indent) {
  for (int i = 0; i < indent; i++) os << "  ";
  switch (s.kind) {
    case Stmt::Kind::ExprStmt:
      render_expr(*s.e1, os);
      break;
    case Stmt::Kind::Assign:
      os << s.name << " <- ";
      render_expr(*s.e1, os);
      break;
    case Stmt::Kind::IndexAssign:
      os << s.name << "[[";
      render_expr(*s.e1, os);
      os << "]] <- ";
      render_expr(*s.e2, os);
      break;
    case Stmt::Kind::If:
      os << "if (";
      render_expr(*s.e1, os);
      os << ") ";
      render_block(s.body, os, indent);
      if (!s.else_body.empty()) {
        os << " else ";
        render_block(s.else_body, os, indent);
      }
      break;
    case Stmt::Kind::While:
      os << "while (";
      render_expr(*s.e1, os);
      os << ") ";
      render_block(s.body, os, indent);
      break;
    case Stmt::Kind::For:
      os << "for (" << s.name << " in ";
      render_expr(*s.e1, os);
      os << ":";
      render_expr(*s.e2, os);
      os << ") ";
      render_block(s.body, os, indent);
      break;
    case Stmt::Kind::Return:
      os << "return(";
      render_expr(*s.e1, os);
      os << ")";
      break;
    case Stmt::Kind::FuncDef:
      os << s.name << " <- function(";
      for (size_t i = 0; i < s.params.size(); i++)
        os << (i ? ", " : "") << s.params[i];
      os << ") ";
      render_block(s.body, os, indent);
      break;
  }
  os << "\n";
}

}  // namespace

Program parse(const std::string& source) {
  Lexer lex(source);
  Parser p(lex.run());
  return p.run();
}

std::string render(const Program& p) {
  std::ostringstream ss;
  for (const auto& s : p.stmts) render_stmt(*s, ss, 0);
  return ss.str();
}

std::string render(const Expr& e) {
  std::ostringstream ss;
  render_expr(e, ss);
  return ss.str();
}

}  // namespace dl
