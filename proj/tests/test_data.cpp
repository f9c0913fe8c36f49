#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include <ldgcn/data.hpp>
#include <ldgcn/rng.hpp>

#include "oracles.hpp"

using namespace ldgcn;

namespace {

// samples already on the f32 grid, so binary round trips are exact
Dataset small_dataset(size_t n_channels, size_t window_len, uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.channel_names = detail::channel_names_for(n_channels);
  ds.window_len = window_len;
  ds.sample_rate = 500.0;
  for (int i = 0; i < 6; ++i) {
    EegWindow w;
    w.subject_id = static_cast<uint16_t>(1 + i % 3);
    w.label = i % 2 == 0 ? Label::Alert : Label::Drowsiness;
    w.sample_rate = 500.0;
    w.samples.resize(n_channels * window_len);
    for (double& v : w.samples) v = static_cast<double>(static_cast<float>(rng.next_normal()));
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("binary dataset bytes survive a second round trip unchanged") {
  Dataset ds = small_dataset(2, 5, 10);
  std::vector<uint8_t> bytes = dataset_to_eegd_bytes(ds);
  Dataset loaded = dataset_from_eegd_bytes(bytes);

  REQUIRE(loaded.windows.size() == ds.windows.size());
  CHECK(loaded.window_len == 5);
  CHECK(loaded.n_channels() == 2);
  CHECK(loaded.sample_rate == 500.0);
  for (size_t i = 0; i < ds.windows.size(); ++i) {
    CHECK(loaded.windows[i].subject_id == ds.windows[i].subject_id);
    CHECK(loaded.windows[i].label == ds.windows[i].label);
    CHECK(loaded.windows[i].samples == ds.windows[i].samples);
  }
  CHECK(dataset_to_eegd_bytes(loaded) == bytes);
}

TEST_CASE("binary loader rejects malformed files") {
  Dataset ds = small_dataset(1, 4, 11);
  std::vector<uint8_t> bytes = dataset_to_eegd_bytes(ds);

  std::vector<uint8_t> magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(dataset_from_eegd_bytes(magic), std::runtime_error);

  std::vector<uint8_t> trailing = bytes;
  trailing.push_back(0);
  std::string msg = message_of([&] { dataset_from_eegd_bytes(trailing); });
  CHECK(msg.find("trailing") != std::string::npos);

  // cut inside the second window; the error names it
  std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + 20 + 19 + 10);
  msg = message_of([&] { dataset_from_eegd_bytes(cut); });
  CHECK(msg.find("window 1") != std::string::npos);

  // corrupt the label byte of window 0 (header 20 bytes, then u16 subject)
  std::vector<uint8_t> bad_label = bytes;
  bad_label[22] = 7;
  msg = message_of([&] { dataset_from_eegd_bytes(bad_label); });
  CHECK(msg.find("label value 7") != std::string::npos);
  CHECK(msg.find("window 0") != std::string::npos);
}

TEST_CASE("binary writer validates window shapes") {
  Dataset ds = small_dataset(1, 4, 12);
  ds.windows[2].samples.pop_back();
  CHECK_THROWS_AS(dataset_to_eegd_bytes(ds), std::invalid_argument);
}

TEST_CASE("csv text round trips exactly") {
  Dataset ds = small_dataset(1, 4, 13);
  ds.windows[3].label = Label::Unlabeled;
  std::string text = dataset_to_csv_text(ds);
  Dataset loaded = dataset_from_csv_text(text);

  REQUIRE(loaded.windows.size() == ds.windows.size());
  CHECK(loaded.window_len == 4);
  CHECK(loaded.n_channels() == 1);
  for (size_t i = 0; i < ds.windows.size(); ++i) {
    CHECK(loaded.windows[i].subject_id == ds.windows[i].subject_id);
    CHECK(loaded.windows[i].label == ds.windows[i].label);
    CHECK(loaded.windows[i].samples == ds.windows[i].samples);  // %.17g is lossless
  }
  CHECK(dataset_to_csv_text(loaded) == text);
}

TEST_CASE("csv header is optional and carriage returns are tolerated") {
  std::string with_header = "subject,label,s0,s1\r\n1,0,0.5,1.5\r\n2,1,-1,2\r\n";
  std::string without = "1,0,0.5,1.5\n2,1,-1,2\n";
  Dataset a = dataset_from_csv_text(with_header);
  Dataset b = dataset_from_csv_text(without);
  REQUIRE(a.windows.size() == 2);
  REQUIRE(b.windows.size() == 2);
  CHECK(a.windows[0].samples == b.windows[0].samples);
  CHECK(a.windows[1].subject_id == 2);
  CHECK(a.windows[1].label == Label::Drowsiness);
}

TEST_CASE("csv loader rejects malformed rows with their row number") {
  std::string msg = message_of([] { dataset_from_csv_text("1,0\n"); });
  CHECK(msg.find("row 0") != std::string::npos);
  CHECK(msg.find("too few columns") != std::string::npos);

  msg = message_of([] { dataset_from_csv_text("1,0,0.5,1.5\n1,0,0.5,1.5,2.5\n"); });
  CHECK(msg.find("row 1") != std::string::npos);
  CHECK(msg.find("column count mismatch") != std::string::npos);

  msg = message_of([] { dataset_from_csv_text("1,0,abc,1.5\n"); });
  CHECK(msg.find("malformed value") != std::string::npos);

  msg = message_of([] { dataset_from_csv_text("1,0,0.5x,1.5\n"); });
  CHECK(msg.find("malformed value") != std::string::npos);

  msg = message_of([] { dataset_from_csv_text("9999999,0,0.5,1.5\n"); });
  CHECK(msg.find("malformed value") != std::string::npos);

  CHECK_THROWS_AS(dataset_from_csv_text("\n\n"), std::runtime_error);

  Dataset multi = small_dataset(2, 4, 14);
  CHECK_THROWS_AS(dataset_to_csv_text(multi), std::invalid_argument);
}

TEST_CASE("channel selection slices the named electrode") {
  Dataset ds = small_dataset(30, 4, 15);
  REQUIRE(ds.channel_names[28] == "Oz");
  Dataset oz = select_channel(ds, "Oz");
  CHECK(oz.n_channels() == 1);
  CHECK(oz.window_len == 4);
  REQUIRE(oz.windows.size() == ds.windows.size());
  for (size_t i = 0; i < ds.windows.size(); ++i) {
    std::vector<double> want(ds.windows[i].samples.begin() + 28 * 4,
                             ds.windows[i].samples.begin() + 29 * 4);
    CHECK(oz.windows[i].samples == want);
    CHECK(oz.windows[i].subject_id == ds.windows[i].subject_id);
    CHECK(oz.windows[i].label == ds.windows[i].label);
  }

  CHECK_THROWS_AS(select_channel(ds, "Xx"), std::invalid_argument);

  // selecting the single channel of single-channel data is the identity
  Dataset one = small_dataset(1, 4, 16);
  Dataset same = select_channel(one, "Oz");
  CHECK(same.windows[0].samples == one.windows[0].samples);
}

TEST_CASE("subject ids come back sorted and unique") {
  Dataset ds = small_dataset(1, 4, 17);
  ds.windows[0].subject_id = 9;
  ds.windows[1].subject_id = 2;
  ds.windows[2].subject_id = 9;
  ds.windows[3].subject_id = 1;
  ds.windows[4].subject_id = 2;
  ds.windows[5].subject_id = 5;
  CHECK(ds.subject_ids() == std::vector<uint16_t>{1, 2, 5, 9});
}

TEST_CASE("leave-one-subject-out folds partition the dataset without leakage") {
  Dataset ds = small_dataset(1, 4, 18);  // subjects cycle 1,2,3
  std::vector<LosoFold> folds = loso_splits(ds);
  REQUIRE(folds.size() == 3);
  for (const LosoFold& fold : folds) {
    // test set holds exactly the fold subject, train set never does
    for (size_t i : fold.test_indices) CHECK(ds.windows[i].subject_id == fold.subject);
    for (size_t i : fold.train_indices) CHECK(ds.windows[i].subject_id != fold.subject);
    // together they cover every window exactly once
    std::vector<size_t> all = fold.train_indices;
    all.insert(all.end(), fold.test_indices.begin(), fold.test_indices.end());
    std::sort(all.begin(), all.end());
    std::vector<size_t> want(ds.windows.size());
    for (size_t i = 0; i < want.size(); ++i) want[i] = i;
    CHECK(all == want);
  }
  CHECK(folds[0].subject == 1);
  CHECK(folds[1].subject == 2);
  CHECK(folds[2].subject == 3);

  Dataset solo = small_dataset(1, 4, 19);
  for (EegWindow& w : solo.windows) w.subject_id = 1;
  CHECK_THROWS_AS(loso_splits(solo), std::invalid_argument);
}

TEST_CASE("synthetic generation is deterministic and balanced") {
  SynthConfig cfg;
  cfg.n_per_class = 5;
  cfg.n_subjects = 3;
  cfg.window_len = 64;
  cfg.seed = 4;
  Dataset a = synth_generate(cfg);
  Dataset b = synth_generate(cfg);
  REQUIRE(a.windows.size() == 10);
  size_t alert = 0;
  for (const EegWindow& w : a.windows) alert += w.label == Label::Alert;
  CHECK(alert == 5);
  for (size_t i = 0; i < a.windows.size(); ++i)
    CHECK(a.windows[i].samples == b.windows[i].samples);

  // subjects rotate round-robin within each class, starting at 1
  CHECK(a.windows[0].subject_id == 1);
  CHECK(a.windows[1].subject_id == 2);
  CHECK(a.windows[2].subject_id == 3);
  CHECK(a.windows[3].subject_id == 1);

  SynthConfig other = cfg;
  other.seed = 5;
  Dataset c = synth_generate(other);
  CHECK(a.windows[0].samples != c.windows[0].samples);

  SynthConfig bad = cfg;
  bad.drowsy_band_gain = 1.0;
  CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
}

TEST_CASE("the drowsy class carries the promised theta-alpha surplus") {
  SynthConfig cfg;
  cfg.n_per_class = 30;
  cfg.window_len = 500;  // exactly 1 s: every integer-Hz tone sits on a DFT bin
  cfg.seed = 21;
  Dataset ds = synth_generate(cfg);

  double alert_mean = 0.0, drowsy_mean = 0.0;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const EegWindow& w : ds.windows) {
    double e = oracle::band_energy_dft(w.samples, cfg.sample_rate, 4.0, 12.0);
    scores.push_back(e);
    labels.push_back(w.label == Label::Drowsiness ? 1 : 0);
    (w.label == Label::Drowsiness ? drowsy_mean : alert_mean) += e;
  }
  alert_mean /= 30.0;
  drowsy_mean /= 30.0;
  CHECK(drowsy_mean >= 2.0 * alert_mean);

  // a bare threshold on that band energy already separates the classes,
  // which is the floor any trained model has to clear
  double threshold = (alert_mean + drowsy_mean) / 2.0;
  size_t correct = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    correct += (scores[i] > threshold ? 1 : 0) == labels[i];
  CHECK(static_cast<double>(correct) / static_cast<double>(scores.size()) >= 0.95);
}
