#include <doctest.h>

#include <sstream>

#include "aircast/ingest.hpp"

using namespace aircast;

namespace {

std::string record_csv(const std::string& body) {
  return "node_id,lat,lon,timestamp,pm25\n" + body;
}

SensorRecord make_record(const std::string& id, double lat, double lon, std::int64_t ts,
                         double pm25) {
  return SensorRecord{id, lat, lon, ts, pm25};
}

// independent summation oracle for bucket means
double mean_oracle(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// brute-force window placement oracle: counts gap-free spans directly
std::size_t window_count_oracle(const std::vector<bool>& present, std::size_t t_in,
                                std::size_t t_out, std::size_t stride) {
  std::size_t count = 0;
  const std::size_t span = t_in + t_out;
  if (present.size() < span) return 0;
  for (std::size_t offset = 0; offset + span <= present.size(); offset += stride) {
    bool ok = true;
    for (std::size_t i = offset; i < offset + span; ++i)
      if (!present[i]) ok = false;
    if (ok) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("iso8601 parse and format") {
  auto ts = parse_iso8601_utc("2020-09-01T00:00:00Z");
  REQUIRE(ts.has_value());
  CHECK(*ts == 1598918400);
  CHECK(format_iso8601_utc(*ts) == "2020-09-01T00:00:00Z");
  CHECK(!parse_iso8601_utc("notatime"));
  CHECK(!parse_iso8601_utc("2020-09-01 00:00:00Z"));
  CHECK(!parse_iso8601_utc("2020-09-01T00:00:00"));
  CHECK(!parse_iso8601_utc("2020-13-01T00:00:00Z"));
}

TEST_CASE("parse_records maps fields") {
  auto records = parse_records(record_csv("n1,24.1,120.5,2020-09-01T00:00:00Z,35.0\n"));
  REQUIRE(records.size() == 1);
  CHECK(records[0].node_id == "n1");
  CHECK(records[0].latitude == doctest::Approx(24.1));
  CHECK(records[0].longitude == doctest::Approx(120.5));
  CHECK(records[0].pm25 == doctest::Approx(35.0));
  CHECK(records[0].timestamp == 1598918400);
}

TEST_CASE("parse_records errors identify line and field") {
  auto message_of = [](const std::string& text) {
    try {
      parse_records(text);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  auto bad_time = message_of(record_csv("n1,24.1,120.5,notatime,35.0\n"));
  CHECK(bad_time.find("line 1") != std::string::npos);
  CHECK(bad_time.find("timestamp") != std::string::npos);

  auto negative = message_of(record_csv("n1,24.1,120.5,2020-09-01T00:00:00Z,-3\n"));
  CHECK(negative.find("rejected") != std::string::npos);

  auto bad_lat = message_of(
      record_csv("ok,1,1,2020-09-01T00:00:00Z,1\nn2,95.0,1,2020-09-01T00:00:00Z,1\n"));
  CHECK(bad_lat.find("line 2") != std::string::npos);
  CHECK(bad_lat.find("lat") != std::string::npos);

  CHECK_THROWS_AS(parse_records("bogus header\n"), DataError);
}

TEST_CASE("record round trip over random records") {
  Rng rng(42);
  std::vector<SensorRecord> records;
  for (int i = 0; i < 100; ++i) {
    SensorRecord r;
    r.node_id = "node" + std::to_string(rng.next_index(50));
    r.latitude = rng.next_uniform(-90.0, 90.0);
    r.longitude = rng.next_uniform(-180.0, 180.0);
    r.timestamp = static_cast<std::int64_t>(rng.next_index(4102444800ULL));
    r.pm25 = rng.next_uniform(0.0, 500.0);
    records.push_back(std::move(r));
  }
  std::ostringstream out;
  write_records(out, records);
  auto parsed = parse_records(out.str());
  REQUIRE(parsed.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(parsed[i].node_id == records[i].node_id);
    CHECK(parsed[i].latitude == records[i].latitude);    // %.17g round-trips exactly
    CHECK(parsed[i].longitude == records[i].longitude);
    CHECK(parsed[i].timestamp == records[i].timestamp);
    CHECK(parsed[i].pm25 == records[i].pm25);
  }
}

TEST_CASE("resample_series bucket means") {
  SUBCASE("singleton bucket") {
    auto series = resample_series({make_record("n1", 24, 120, 100, 42.0)});
    REQUIRE(series.length() == 1);
    CHECK(*series.values[0] == doctest::Approx(42.0));
    CHECK(series.start_bucket == 0);
  }
  SUBCASE("24 five-minute readings average to 12.5") {
    std::vector<SensorRecord> records;
    std::vector<double> raw;
    for (int i = 0; i < 24; ++i) {
      records.push_back(make_record("n1", 24, 120, i * 300, static_cast<double>(i + 1)));
      raw.push_back(static_cast<double>(i + 1));
    }
    auto series = resample_series(records, 7200);
    REQUIRE(series.length() == 1);
    const double expected = mean_oracle(raw);
    CHECK(expected == doctest::Approx(12.5));
    CHECK(*series.values[0] == doctest::Approx(expected));
  }
  SUBCASE("empty bucket becomes a gap") {
    auto series = resample_series({make_record("n1", 24, 120, 0, 1.0),
                                   make_record("n1", 24, 120, 2 * 7200, 3.0)});
    REQUIRE(series.length() == 3);
    CHECK(series.values[0].has_value());
    CHECK(!series.values[1].has_value());
    CHECK(series.values[2].has_value());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(resample_series({}), DataError);
    CHECK_THROWS_AS(resample_series({make_record("a", 0, 0, 0, 1.0),
                                     make_record("b", 0, 0, 0, 1.0)}),
                    DataError);
  }
}

TEST_CASE("resampling is idempotent") {
  Rng rng(7);
  std::vector<SensorRecord> records;
  for (int i = 0; i < 200; ++i)
    records.push_back(make_record("n1", 24, 120, static_cast<std::int64_t>(rng.next_index(40)) * 3600,
                                  rng.next_uniform(0, 80)));
  auto once = resample_series(records, 7200);
  auto twice = resample_series(to_records(once), 7200);
  REQUIRE(once.length() == twice.length());
  CHECK(once.start_bucket == twice.start_bucket);
  for (std::size_t i = 0; i < once.length(); ++i) {
    CHECK(once.values[i].has_value() == twice.values[i].has_value());
    if (once.values[i]) CHECK(*once.values[i] == doctest::Approx(*twice.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("split_series") {
  SUBCASE("240 at 0.9 gives 216/24") {
    std::vector<int> items(240);
    for (int i = 0; i < 240; ++i) items[static_cast<std::size_t>(i)] = i;
    auto [train, test] = split_series(items, 0.9);
    CHECK(train.size() == 216);
    CHECK(test.size() == 24);
  }
  SUBCASE("minimum length") {
    std::vector<int> items{1, 2};
    auto [train, test] = split_series(items, 0.9);
    CHECK(train.size() == 1);
    CHECK(test.size() == 1);
  }
  SUBCASE("fraction bounds") {
    std::vector<int> items{1, 2, 3};
    CHECK_THROWS_AS(split_series(items, 1.0), DataError);
    CHECK_THROWS_AS(split_series(items, 0.0), DataError);
    CHECK_THROWS_AS(split_series(std::vector<int>{1}, 0.9), DataError);
  }
  SUBCASE("split preserves order and content") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::uint64_t> items(2 + rng.next_index(97));
      for (auto& v : items) v = rng.next_u64();
      double f = rng.next_uniform(0.05, 0.95);
      auto [train, test] = split_series(items, f);
      std::vector<std::uint64_t> joined = train;
      joined.insert(joined.end(), test.begin(), test.end());
      CHECK(joined == items);
    }
  }
}

TEST_CASE("make_windows counts and contents") {
  auto dense_series = [](std::size_t length) {
    NodeSeries s;
    s.node_id = "n1";
    s.period_seconds = 7200;
    s.start_bucket = 0;
    for (std::size_t i = 0; i < length; ++i) s.values.push_back(static_cast<double>(i));
    return s;
  };

  SUBCASE("L=30 T_in=24 gives 6 samples") {
    auto s = dense_series(30);
    auto windows = make_windows(s, 24, 1, 1);
    const std::size_t expected = window_count_oracle(std::vector<bool>(30, true), 24, 1, 1);
    CHECK(expected == 6);
    CHECK(windows.size() == expected);
    CHECK(windows[0].inputs.size() == 24);
    CHECK(windows[0].inputs[0][0] == doctest::Approx(0.0));
    CHECK(windows[0].target[0] == doctest::Approx(24.0));
    CHECK(windows[5].target[0] == doctest::Approx(29.0));
  }
  SUBCASE("no room for the target") {
    auto s = dense_series(24);
    CHECK(make_windows(s, 24, 1, 1).empty());
  }
  SUBCASE("gap at bucket 10 removes covering samples") {
    auto s = dense_series(30);
    s.values[10] = std::nullopt;
    auto windows = make_windows(s, 24, 1, 1);
    std::vector<bool> present(30, true);
    present[10] = false;
    CHECK(windows.size() == window_count_oracle(present, 24, 1, 1));
    for (const auto& w : windows)
      CHECK(w.start_bucket > 10);  // every span covering bucket 10 is absent
  }
  SUBCASE("channel alignment mismatch") {
    auto a = dense_series(30);
    auto b = dense_series(29);
    CHECK_THROWS_AS(make_windows({&a, &b}, 4, 1, 1), DataError);
    auto c = dense_series(30);
    c.start_bucket = 1;
    CHECK_THROWS_AS(make_windows({&a, &c}, 4, 1, 1), DataError);
  }
  SUBCASE("multi-channel windows put the test node first") {
    auto a = dense_series(10);
    auto b = dense_series(10);
    for (auto& v : b.values) v = *v + 100.0;
    auto windows = make_windows({&a, &b}, 3, 1, 1);
    REQUIRE(!windows.empty());
    CHECK(windows[0].inputs[0][0] == doctest::Approx(0.0));
    CHECK(windows[0].inputs[0][1] == doctest::Approx(100.0));
    CHECK(windows[0].target[0] == doctest::Approx(3.0));  // target from channel 0
  }
}

TEST_CASE("window count matches brute force for all small gap-free cases") {
  for (std::size_t length = 1; length <= 100; ++length) {
    for (std::size_t t_in : {1u, 2u, 3u, 5u, 8u, 13u, 24u}) {
      for (std::size_t t_out : {1u, 2u, 3u}) {
        for (std::size_t stride : {1u, 2u, 3u, 4u}) {
          const std::size_t expected =
              window_count_oracle(std::vector<bool>(length, true), t_in, t_out, stride);
          CHECK(window_count(length, t_in, t_out, stride) == expected);
        }
      }
    }
  }
}

TEST_CASE("windows over gapped series match enumeration oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    NodeSeries s;
    s.node_id = "n1";
    s.period_seconds = 7200;
    s.start_bucket = 0;
    std::vector<bool> present;
    const std::size_t length = 20 + rng.next_index(60);
    for (std::size_t i = 0; i < length; ++i) {
      if (rng.next_unit() < 0.15) {
        s.values.push_back(std::nullopt);
        present.push_back(false);
      } else {
        s.values.push_back(rng.next_unit());
        present.push_back(true);
      }
    }
    const std::size_t t_in = 1 + rng.next_index(8);
    const std::size_t t_out = 1 + rng.next_index(3);
    const std::size_t stride = 1 + rng.next_index(3);
    CHECK(make_windows(s, t_in, t_out, stride).size() ==
          window_count_oracle(present, t_in, t_out, stride));
  }
}

TEST_CASE("neighbor selection by great-circle distance with id tie-break") {
  std::vector<NodeSeries> nodes(4);
  nodes[0].node_id = "center";
  nodes[0].latitude = 24.0;
  nodes[0].longitude = 120.0;
  nodes[1].node_id = "b";
  nodes[1].latitude = 24.0;
  nodes[1].longitude = 120.1;
  nodes[2].node_id = "a";
  nodes[2].latitude = 24.0;
  nodes[2].longitude = 119.9;  // same distance as b
  nodes[3].node_id = "far";
  nodes[3].latitude = 25.0;
  nodes[3].longitude = 120.0;
  auto picked = select_neighbors(nodes, 0, 2);
  REQUIRE(picked.size() == 2);
  CHECK(nodes[picked[0]].node_id == "a");  // tie broken lexicographically
  CHECK(nodes[picked[1]].node_id == "b");
}

TEST_CASE("series file round trip with NA gaps") {
  NodeSeries s;
  s.node_id = "n3";
  s.period_seconds = 7200;
  s.start_bucket = 5;
  s.values = {1.5, std::nullopt, 2.25};
  std::ostringstream out;
  write_series(out, {s});
  CHECK(out.str() ==
        "node_id,bucket_index,value\nn3,5,1.5\nn3,6,NA\nn3,7,2.25\n");
  auto parsed = parse_series(out.str());
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0].node_id == "n3");
  CHECK(parsed[0].start_bucket == 5);
  REQUIRE(parsed[0].length() == 3);
  CHECK(*parsed[0].values[0] == doctest::Approx(1.5));
  CHECK(!parsed[0].values[1].has_value());
  CHECK(*parsed[0].values[2] == doctest::Approx(2.25));
}
