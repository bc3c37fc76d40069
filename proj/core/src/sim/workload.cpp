#include "multiverse/sim/workload.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "multiverse/errors.hpp"

namespace multiverse::sim {

namespace {

constexpr std::size_t kMaxActions = 1'000'000;

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::uint64_t parse_number(std::string_view tok, std::size_t line) {
  int base = 10;
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    tok.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("invalid number `" + std::string(tok) + "`", line);
  }
  return v;
}

Operand parse_operand(const std::string& tok, std::size_t line) {
  Operand op;
  if (tok.starts_with('@')) {
    op.kind = Operand::Kind::Var;
    std::string body = tok.substr(1);
    if (auto plus = body.find('+'); plus != std::string::npos) {
      op.value = parse_number(body.substr(plus + 1), line);
      body.resize(plus);
    }
    if (!is_identifier(body)) throw ParseError("invalid variable `" + tok + "`", line);
    op.name = body;
  } else if (tok.starts_with('&')) {
    op.kind = Operand::Kind::FuncRef;
    op.name = tok.substr(1);
    if (!is_identifier(op.name)) throw ParseError("invalid function `" + tok + "`", line);
  } else {
    op.value = parse_number(tok, line);
  }
  return op;
}

std::vector<std::string> split(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

// Strips a trailing `as <var>` into action.bind.
void take_binding(std::vector<std::string>& toks, Action& a, std::size_t line) {
  if (toks.size() >= 2 && toks[toks.size() - 2] == "as") {
    const std::string& var = toks.back();
    if (!is_identifier(var)) throw ParseError("invalid variable name `" + var + "`", line);
    if (var == "stack") throw ParseError("`stack` is reserved", line);
    a.bind = var;
    toks.resize(toks.size() - 2);
  } else if (!toks.empty() && toks.back() == "as") {
    throw ParseError("`as` needs a variable name", line);
  }
}

void expect_args(const std::vector<std::string>& toks, std::size_t n,
                 std::size_t line) {
  if (toks.size() != n + 1) {
    throw ParseError("`" + toks[0] + "` takes " + std::to_string(n) +
                         (n == 1 ? " argument" : " arguments"),
                     line);
  }
}

Action parse_action(std::vector<std::string> toks, std::size_t line) {
  Action a;
  a.line = line;
  const std::string& op = toks[0];
  if (op == "compute") {
    expect_args(toks, 1, line);
    a.kind = ActionKind::Compute;
    a.cycles = parse_number(toks[1], line);
  } else if (op == "mmap") {
    take_binding(toks, a, line);
    if (toks.size() < 2) throw ParseError("`mmap` needs a length", line);
    a.kind = ActionKind::Mmap;
    a.length = parse_number(toks[1], line);
    if (a.length == 0) throw ParseError("`mmap` length must be positive", line);
    for (std::size_t i = 2; i < toks.size(); ++i) {
      if (toks[i] == "populate") {
        a.populate = true;
      } else if (toks[i] == "ro") {
        a.writable = false;
      } else {
        throw ParseError("unknown mmap flag `" + toks[i] + "`", line);
      }
    }
  } else if (op == "munmap") {
    expect_args(toks, 2, line);
    a.kind = ActionKind::Munmap;
    a.args = {parse_operand(toks[1], line), parse_operand(toks[2], line)};
  } else if (op == "touch") {
    expect_args(toks, 2, line);
    a.kind = ActionKind::Touch;
    a.args = {parse_operand(toks[1], line)};
    if (toks[2] == "r") {
      a.access = mem::AccessKind::Read;
    } else if (toks[2] == "w") {
      a.access = mem::AccessKind::Write;
    } else if (toks[2] == "x") {
      a.access = mem::AccessKind::Execute;
    } else {
      throw ParseError("access must be r, w or x", line);
    }
  } else if (op == "syscall" || op == "call_override" || op == "sync_call") {
    take_binding(toks, a, line);
    if (toks.size() < 2) throw ParseError("`" + op + "` needs a name", line);
    a.kind = op == "syscall"         ? ActionKind::Syscall
             : op == "call_override" ? ActionKind::CallOverride
                                     : ActionKind::SyncCall;
    a.name = toks[1];
    if (!is_identifier(a.name)) throw ParseError("invalid name `" + a.name + "`", line);
    for (std::size_t i = 2; i < toks.size(); ++i) {
      a.args.push_back(parse_operand(toks[i], line));
    }
    if (a.args.size() > 6) throw ParseError("at most 6 arguments", line);
  } else if (op == "spawn" || op == "spawn_nested" || op == "join") {
    expect_args(toks, 1, line);
    a.kind = op == "spawn"          ? ActionKind::Spawn
             : op == "spawn_nested" ? ActionKind::SpawnNested
                                    : ActionKind::Join;
    a.name = toks[1];
    if (!is_identifier(a.name)) throw ParseError("invalid thread name `" + a.name + "`", line);
  } else if (op == "exit") {
    expect_args(toks, 0, line);
    a.kind = ActionKind::Exit;
  } else {
    throw ParseError("unknown action `" + op + "`", line);
  }
  return a;
}

hrt::FunctionBehavior parse_func(const std::vector<std::string>& toks,
                                 std::size_t line) {
  hrt::FunctionBehavior b;
  for (std::size_t i = 2; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected key=value, got `" + toks[i] + "`", line);
    }
    const std::string key = toks[i].substr(0, eq);
    const std::uint64_t v = parse_number(toks[i].substr(eq + 1), line);
    if (key == "cycles") {
      b.cycles = v;
    } else if (key == "ret") {
      b.returns = v;
    } else if (key == "touch") {
      b.touches.push_back(v);
    } else {
      throw ParseError("unknown function attribute `" + key + "`", line);
    }
  }
  return b;
}

void validate(const WorkloadProgram& p) {
  const ThreadBody* main = p.find("main");
  if (main == nullptr) throw ParseError("no `main` thread", 0);
  if (main->side != BodySide::Ros) {
    throw ParseError("`main` must run on the ROS side", main->line);
  }
  const auto& builtins = hrt::builtin_functions();
  auto known_function = [&](const std::string& n) {
    return p.functions.contains(n) || builtins.contains(n);
  };

  for (const ThreadBody& b : p.bodies) {
    if (b.side == BodySide::Ros && b.name != "main") {
      throw ParseError("ROS thread `" + b.name + "` never runs; only main is "
                       "started on the ROS side",
                       b.line);
    }
    if (p.functions.contains(b.name)) {
      throw ParseError("thread `" + b.name + "` clashes with a function", b.line);
    }
    if (b.actions.empty() || b.actions.back().kind != ActionKind::Exit) {
      throw ParseError("thread `" + b.name + "` does not end with exit", b.line);
    }
    std::map<std::string, int> outstanding;  // spawned minus joined, main only
    for (std::size_t i = 0; i < b.actions.size(); ++i) {
      const Action& a = b.actions[i];
      if (a.kind == ActionKind::Exit && i + 1 != b.actions.size()) {
        throw ParseError("action after exit", b.actions[i + 1].line);
      }
      for (const Operand& o : a.args) {
        if (o.kind == Operand::Kind::FuncRef && !p.find(o.name) &&
            !known_function(o.name)) {
          throw ParseError("unknown function `&" + o.name + "`", a.line);
        }
      }
      switch (a.kind) {
        case ActionKind::Spawn:
        case ActionKind::SpawnNested: {
          const bool nested = a.kind == ActionKind::SpawnNested;
          if (!nested && b.side != BodySide::Ros) {
            throw ParseError("spawn is issued from the ROS side; use spawn_nested",
                             a.line);
          }
          if (nested && b.side != BodySide::Hrt) {
            throw ParseError("spawn_nested is only valid in HRT threads", a.line);
          }
          const ThreadBody* t = p.find(a.name);
          if (t == nullptr) {
            throw ParseError("undefined spawn target `" + a.name + "`", a.line);
          }
          if (t->side != BodySide::Hrt) {
            throw ParseError("spawn target `" + a.name + "` is not an HRT thread",
                             a.line);
          }
          if (!nested) ++outstanding[a.name];
          break;
        }
        case ActionKind::Join:
          if (b.name != "main") throw ParseError("only main may join", a.line);
          if (outstanding[a.name]-- <= 0) {
            throw ParseError("join of `" + a.name + "` without a matching spawn",
                             a.line);
          }
          break;
        case ActionKind::SyncCall:
          if (b.side != BodySide::Ros) {
            throw ParseError("sync_call is issued from the ROS side", a.line);
          }
          if (!known_function(a.name)) {
            throw ParseError("unknown function `" + a.name + "`", a.line);
          }
          break;
        case ActionKind::CallOverride:
          if (a.name == "pthread_create") {
            const bool has_fn = std::any_of(a.args.begin(), a.args.end(), [&](const Operand& o) {
              return o.kind == Operand::Kind::FuncRef && p.find(o.name) &&
                     p.find(o.name)->side == BodySide::Hrt;
            });
            if (!has_fn) {
              throw ParseError("pthread_create needs an &<hrt thread> argument",
                               a.line);
            }
            if (b.name == "main") {
              for (const Operand& o : a.args) {
                if (o.kind == Operand::Kind::FuncRef && p.find(o.name)) {
                  ++outstanding[o.name];
                  break;
                }
              }
            }
          }
          break;
        default:
          break;
      }
    }
  }
}

}  // namespace

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Compute:
      return "compute";
    case ActionKind::Mmap:
      return "mmap";
    case ActionKind::Munmap:
      return "munmap";
    case ActionKind::Touch:
      return "touch";
    case ActionKind::Syscall:
      return "syscall";
    case ActionKind::Spawn:
      return "spawn";
    case ActionKind::SpawnNested:
      return "spawn_nested";
    case ActionKind::Join:
      return "join";
    case ActionKind::CallOverride:
      return "call_override";
    case ActionKind::SyncCall:
      return "sync_call";
    case ActionKind::Exit:
      return "exit";
  }
  return "?";
}

const ThreadBody* WorkloadProgram::find(const std::string& name) const {
  for (const ThreadBody& b : bodies) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const ThreadBody& WorkloadProgram::main() const {
  const ThreadBody* m = find("main");
  if (m == nullptr) throw UsageError("workload has no main thread");
  return *m;
}

std::vector<std::string> WorkloadProgram::image_symbols() const {
  std::vector<std::string> names;
  for (const auto& [name, b] : hrt::builtin_functions()) names.push_back(name);
  for (const auto& [name, b] : functions) names.push_back(name);
  for (const ThreadBody& b : bodies) {
    if (b.side == BodySide::Hrt) names.push_back(b.name);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::map<std::string, hrt::FunctionBehavior> WorkloadProgram::behaviors() const {
  auto out = functions;
  for (const ThreadBody& b : bodies) {
    if (b.side == BodySide::Hrt) out.emplace(b.name, hrt::FunctionBehavior{});
  }
  return out;
}

WorkloadProgram parse_workload(std::string_view text) {
  WorkloadProgram prog;
  ThreadBody* body = nullptr;
  struct Repeat {
    std::uint64_t count;
    std::size_t start;
    std::size_t line;
  };
  std::vector<Repeat> repeats;

  std::istringstream in{std::string(text)};
  std::string raw_line;
  std::size_t line = 0;
  while (std::getline(in, raw_line)) {
    ++line;
    if (auto hash = raw_line.find('#'); hash != std::string::npos) raw_line.resize(hash);
    std::vector<std::string> toks = split(raw_line);
    if (toks.empty()) continue;
    const std::string& kw = toks[0];

    if (body == nullptr) {
      if (kw == "func") {
        if (toks.size() < 2 || !is_identifier(toks[1])) {
          throw ParseError("`func` needs a name", line);
        }
        if (prog.functions.contains(toks[1])) {
          throw ParseError("function `" + toks[1] + "` declared twice", line);
        }
        prog.functions.emplace(toks[1], parse_func(toks, line));
      } else if (kw == "thread") {
        if (toks.size() != 3 || !is_identifier(toks[1])) {
          throw ParseError("expected `thread <name> ros|hrt`", line);
        }
        if (toks[2] != "ros" && toks[2] != "hrt") {
          throw ParseError("thread side must be ros or hrt", line);
        }
        if (prog.find(toks[1]) != nullptr) {
          throw ParseError("thread `" + toks[1] + "` defined twice", line);
        }
        prog.bodies.push_back(ThreadBody{
            toks[1], toks[2] == "ros" ? BodySide::Ros : BodySide::Hrt, line, {}});
        body = &prog.bodies.back();
      } else {
        throw ParseError("expected `thread` or `func`, got `" + kw + "`", line);
      }
      continue;
    }

    if (kw == "end") {
      if (toks.size() != 1) throw ParseError("`end` takes no arguments", line);
      if (!repeats.empty()) {
        throw ParseError("`repeat` without `done`", repeats.back().line);
      }
      body = nullptr;
    } else if (kw == "repeat") {
      if (toks.size() != 2) throw ParseError("`repeat` takes a count", line);
      repeats.push_back(Repeat{parse_number(toks[1], line), body->actions.size(), line});
    } else if (kw == "done") {
      if (toks.size() != 1) throw ParseError("`done` takes no arguments", line);
      if (repeats.empty()) throw ParseError("`done` without `repeat`", line);
      const Repeat r = repeats.back();
      repeats.pop_back();
      std::vector<Action> block(body->actions.begin() + static_cast<std::ptrdiff_t>(r.start),
                                body->actions.end());
      if (std::any_of(block.begin(), block.end(),
                      [](const Action& a) { return a.kind == ActionKind::Exit; })) {
        throw ParseError("exit inside a repeat block", r.line);
      }
      body->actions.resize(r.start);
      if (r.count != 0 && block.size() > kMaxActions / r.count) {
        throw ParseError("repeat expands beyond the action limit", r.line);
      }
      for (std::uint64_t i = 0; i < r.count; ++i) {
        body->actions.insert(body->actions.end(), block.begin(), block.end());
      }
      if (body->actions.size() > kMaxActions) {
        throw ParseError("repeat expands beyond the action limit", r.line);
      }
    } else if (kw == "thread" || kw == "func") {
      throw ParseError("missing `end` for thread `" + body->name + "`", line);
    } else {
      body->actions.push_back(parse_action(std::move(toks), line));
    }
  }
  if (body != nullptr) {
    throw ParseError("missing `end` for thread `" + body->name + "`", line + 1);
  }
  validate(prog);
  return prog;
}

}  // namespace multiverse::sim
