#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <fstream>

#include "abase/error.hpp"
#include "abase/store.hpp"
#include "support/support.hpp"

using namespace abase;
using testsupport::TempDir;

namespace {

UserRecord user_n(int n) {
  UserRecord u;
  char hex[33];
  std::snprintf(hex, sizeof hex, "%032x", n + 1);
  u.user_id = Id(hex);
  u.name = "user " + std::to_string(n);
  u.organisation = "lab";
  return u;
}

void put_user(Store& s, int n) {
  s.write([&](const Catalog&, Txn& t) { t.put(Table::users, json(user_n(n))); });
}

std::size_t user_count(const Store& s) {
  return s.read([](const Catalog& c) { return c.users.size(); });
}

void append_raw(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  out << bytes;
}

}  // namespace

TEST_CASE("log line encoding") {
  auto line = encode_log_line("{\"a\":1}");
  CHECK(line.back() == '\n');
  CHECK(line.rfind("7\t", 0) == 0);
  auto body = line.substr(0, line.size() - 1);
  CHECK(decode_log_line(body) == std::optional<std::string>("{\"a\":1}"));

  auto flipped = body;
  flipped.back() = '2';
  CHECK_FALSE(decode_log_line(flipped).has_value());
  CHECK_FALSE(decode_log_line(body.substr(0, body.size() - 2)).has_value());
  CHECK_FALSE(decode_log_line("").has_value());
  CHECK_FALSE(decode_log_line("garbage").has_value());
  CHECK(decode_log_line(encode_log_line("").substr(0, encode_log_line("").size() - 1)) == "");
}

TEST_CASE("committed records survive reopen") {
  TempDir t;
  {
    Store s(t / "db");
    for (int i = 0; i < 5; ++i) put_user(s, i);
    CHECK(s.open_warnings().empty());
  }
  Store s(t / "db");
  CHECK(s.open_warnings().empty());
  CHECK(user_count(s) == 5);
  CHECK(testsupport::read_file(t / "db" / "store.manifest").rfind("abase-store v1", 0) == 0);
  CHECK(s.read([](const Catalog& c) { return c.user(user_n(3).user_id)->name; }) == "user 3");
}

TEST_CASE("later records supersede earlier ones") {
  TempDir t;
  {
    Store s(t / "db");
    put_user(s, 0);
    auto u = user_n(0);
    u.active = false;
    s.write([&](const Catalog&, Txn& x) { x.put(Table::users, json(u)); });
  }
  Store s(t / "db");
  CHECK_FALSE(s.read([](const Catalog& c) { return c.user(user_n(0).user_id)->active; }));
}

TEST_CASE("a throwing writer discards its batch") {
  TempDir t;
  Store s(t / "db");
  auto before = s.disk_bytes();
  CHECK_THROWS(s.write([&](const Catalog&, Txn& x) {
    x.put(Table::users, json(user_n(0)));
    throw Error(ErrorKind::validation, "no");
  }));
  CHECK(user_count(s) == 0);
  CHECK(s.disk_bytes() == before);
}

TEST_CASE("torn and uncommitted tails are truncated with a warning") {
  TempDir t;
  {
    Store s(t / "db");
    put_user(s, 0);
    put_user(s, 1);
  }
  auto log = t / "db" / "tables" / "users.log";
  auto good_size = std::filesystem::file_size(log);

  SUBCASE("torn line") { append_raw(log, "57\tdeadbeef\t{\"txn\":3,"); }
  SUBCASE("complete line from a txn never committed") {
    json payload = {{"txn", 3}, {"i", 0}, {"rec", json(user_n(9))}};
    append_raw(log, encode_log_line(payload.dump()));
  }
  SUBCASE("corrupt checksum") {
    auto line = encode_log_line("{\"txn\":3}");
    line[line.find('\t') + 1] ^= 1;
    append_raw(log, line);
  }

  Store s(t / "db");
  CHECK(user_count(s) == 2);
  REQUIRE(s.open_warnings().size() == 1);
  CHECK(s.open_warnings()[0].find("users.log") == 0);
  CHECK(std::filesystem::file_size(log) == good_size);
  put_user(s, 5);
  s.close();
  Store again(t / "db");
  CHECK(again.open_warnings().empty());
  CHECK(user_count(again) == 3);
}

TEST_CASE("torn commit log tail") {
  TempDir t;
  {
    Store s(t / "db");
    put_user(s, 0);
  }
  append_raw(t / "db" / "tables" / "commits.log", "12\tab");
  Store s(t / "db");
  CHECK(user_count(s) == 1);
  REQUIRE(s.open_warnings().size() == 1);
  CHECK(s.open_warnings()[0].find("commits.log") == 0);
}

TEST_CASE("a second handle on the same store is refused") {
  TempDir t;
  Store s(t / "db");
  try {
    Store other(t / "db");
    FAIL("expected the lock to be held");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  s.close();
  Store after(t / "db");
  CHECK(user_count(after) == 0);
}

TEST_CASE("writes after close are a state error") {
  TempDir t;
  Store s(t / "db");
  s.close();
  try {
    put_user(s, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
}

TEST_CASE("unknown manifest is refused") {
  TempDir t;
  testsupport::write_file(t / "db" / "store.manifest", "someone-else v9\n");
  CHECK_THROWS_AS(Store(t / "db"), Error);
}

TEST_CASE("after_commit sees every transaction in order") {
  TempDir t;
  std::vector<std::uint64_t> seen;
  StoreOptions o;
  o.after_commit = [&](const Catalog& c, std::uint64_t txn) {
    seen.push_back(txn);
    CHECK(c.users.size() == txn);
  };
  Store s(t / "db", o);
  for (int i = 0; i < 4; ++i) put_user(s, i);
  CHECK(seen == std::vector<std::uint64_t>{1, 2, 3, 4});
}

TEST_CASE("a crash mid-write keeps exactly the committed prefix") {
  // child writes 20 users and dies part-way; each crash point must leave a
  // prefix of users 0..k-1 with no partial batch visible
  TempDir t;
  std::uint64_t full = 0;
  {
    Store s(t / "ref");
    auto base = s.disk_bytes();
    for (int i = 0; i < 20; ++i) put_user(s, i);
    full = s.disk_bytes() - base;
  }
  for (std::uint64_t cut : {std::uint64_t{1}, full / 7, full / 3, full / 2, full - 3}) {
    CAPTURE(cut);
    auto root = t / ("crash" + std::to_string(cut));
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      StoreOptions o;
      o.crash_after_bytes = cut;
      Store s(root, o);
      for (int i = 0; i < 20; ++i) put_user(s, i);
      std::_Exit(0);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 86);
    Store s(root);
    auto n = user_count(s);
    CHECK(n < 20);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(s.read([&](const Catalog& c) { return c.user(user_n(static_cast<int>(i)).user_id) != nullptr; }));
    }
  }
}
