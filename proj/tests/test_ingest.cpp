#include "hrgroup/ingest.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

using namespace hrgroup;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvariantViolation;
}

} // namespace

TEST(ParseCorpus, MapsLabelsInOrder) {
    const auto corpus = parse_corpus_text("subject,device,timestamp,bpm,label\n"
                                          "A,AppleWatch,0,60,Rest\n"
                                          "A,AppleWatch,1,61,Rest\n"
                                          "A,AppleWatch,2,62,Breathe\n");
    ASSERT_EQ(corpus.size(), 1u);
    ASSERT_EQ(corpus[0].size(), 3u);
    EXPECT_EQ(corpus[0].samples[0].label, ActivityLabel::Rest);
    EXPECT_EQ(corpus[0].samples[1].label, ActivityLabel::Rest);
    EXPECT_EQ(corpus[0].samples[2].label, ActivityLabel::Breathe);
}

TEST(ParseCorpus, RejectsOutOfRangeBpm) {
    EXPECT_EQ(code_of([] { parse_corpus_text("subject,device,timestamp,bpm,label\nA,AppleWatch,0,300,Rest\n"); }),
              ErrorCode::OutOfRangeBpm);
    EXPECT_EQ(code_of([] { parse_corpus_text("subject,device,timestamp,bpm,label\nA,AppleWatch,0,20,Rest\n"); }),
              ErrorCode::OutOfRangeBpm);
}

TEST(ParseCorpus, CollapsesDuplicateTimestampsToMean) {
    const auto corpus = parse_corpus_text("subject,device,timestamp,bpm,label\n"
                                          "A,AppleWatch,5,60,Rest\n"
                                          "A,AppleWatch,5,70,Rest\n");
    ASSERT_EQ(corpus[0].size(), 1u);
    EXPECT_DOUBLE_EQ(corpus[0].samples[0].bpm, 65.0);
    EXPECT_DOUBLE_EQ(corpus[0].samples[0].timestamp, 0.0);
}

TEST(ParseCorpus, ConflictingLabelsAtEqualTimestampsFail) {
    EXPECT_EQ(code_of([] {
                  parse_corpus_text("subject,device,timestamp,bpm,label\n"
                                    "A,AppleWatch,5,60,Rest\nA,AppleWatch,5,70,Type\n");
              }),
              ErrorCode::NonMonotonicTimestamps);
}

TEST(ParseCorpus, MissingColumnAndUnknownLabel) {
    EXPECT_EQ(code_of([] { parse_corpus_text("subject,device,time,bpm,label\nA,AppleWatch,0,60,Rest\n"); }),
              ErrorCode::MissingColumn);
    EXPECT_EQ(code_of([] { parse_corpus_text("subject,device,timestamp,bpm,label\nA,AppleWatch,0,60,Jog\n"); }),
              ErrorCode::UnknownLabel);
}

TEST(ParseCorpus, SortsAndFiltersDevice) {
    const auto corpus = parse_corpus_text("subject,device,timestamp,bpm,label\n"
                                          "A,Apple Watch,12,70,Breathe\n"
                                          "A,Fitbit,11,99,Rest\n"
                                          "A,Apple Watch,10,60,Rest\n"
                                          "B,apple_watch,0,80,Rest\n");
    ASSERT_EQ(corpus.size(), 2u);
    EXPECT_EQ(corpus[1].subject_id, "B");
    ASSERT_EQ(corpus[0].size(), 2u);
    EXPECT_DOUBLE_EQ(corpus[0].samples[0].timestamp, 0.0);
    EXPECT_DOUBLE_EQ(corpus[0].samples[1].timestamp, 2.0);
    EXPECT_DOUBLE_EQ(corpus[0].samples[1].bpm, 70.0);

    CorpusSchema all;
    all.device_filter.clear();
    EXPECT_EQ(parse_corpus_text("subject,device,timestamp,bpm,label\nA,Fitbit,0,60,Rest\nA,Garmin,0,60,Rest\n", all)
                  .size(),
              2u);
}

TEST(ParseCorpus, CustomSchemaAndIsoTimestamps) {
    CorpusSchema schema{"Participant", "", "Time", "HR", "Activity", ""};
    const auto corpus = parse_corpus_text("Participant,Time,HR,Activity\n"
                                          "p1,2019-07-15T10:00:00Z,60,Rest\n"
                                          "p1,2019-07-15T10:00:01.5Z,61,rest after activity\n"
                                          "p1,2019-07-15T12:00:03+02:00,62,Typing\n",
                                          schema);
    ASSERT_EQ(corpus.size(), 1u);
    ASSERT_EQ(corpus[0].size(), 3u);
    EXPECT_DOUBLE_EQ(corpus[0].samples[1].timestamp, 1.5);
    EXPECT_DOUBLE_EQ(corpus[0].samples[2].timestamp, 3.0);
    EXPECT_EQ(corpus[0].samples[1].label, ActivityLabel::RestAC);
    EXPECT_EQ(corpus[0].samples[2].label, ActivityLabel::Type);
}

TEST(ParseCorpus, MixedTimestampFormatsAreRejected) {
    EXPECT_EQ(code_of([] {
                  parse_corpus_text("subject,device,timestamp,bpm,label\n"
                                    "A,AppleWatch,0,60,Rest\nA,AppleWatch,2019-07-15T10:00:00,61,Rest\n");
              }),
              ErrorCode::MalformedInput);
}

TEST(ParseCorpus, SerializeRoundTripIsIdentity) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SyntheticCohortSpec spec;
        spec.n_subjects = 4;
        spec.seed = seed;
        const auto cohort = generate_synthetic(spec);
        const auto text = write_corpus_csv(cohort.series);
        const auto parsed = parse_corpus_text(text);
        EXPECT_EQ(parsed, cohort.series);
        EXPECT_EQ(write_corpus_csv(parsed), text);
    }
}

TEST(ParseCorpus, ReadsDirectoryOfFiles) {
    const auto dir = std::filesystem::temp_directory_path() / "hrgroup_ingest_dir";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    io::write_file(dir / "b.csv", "subject,device,timestamp,bpm,label\nB,AppleWatch,0,70,Rest\n");
    io::write_file(dir / "a.csv", "subject,device,timestamp,bpm,label\nA,AppleWatch,0,60,Rest\n");
    io::write_file(dir / "notes.txt", "ignored");
    const auto corpus = parse_corpus(dir);
    ASSERT_EQ(corpus.size(), 2u);
    EXPECT_EQ(corpus[0].subject_id, "A");
    EXPECT_EQ(corpus[1].subject_id, "B");
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------

SubjectSeries make_series(std::vector<HeartRateSample> s) { return {"S", "AppleWatch", std::move(s)}; }

TEST(Resample, InterpolatesLinearly) {
    const auto r = resample_uniform(make_series({{0, 60, ActivityLabel::Rest}, {2, 70, ActivityLabel::Breathe}}), 1.0);
    ASSERT_EQ(r.series.size(), 3u);
    EXPECT_DOUBLE_EQ(r.series.samples[1].timestamp, 1.0);
    EXPECT_DOUBLE_EQ(r.series.samples[1].bpm, 65.0);
    // Equidistant: the earlier sample's label wins.
    EXPECT_EQ(r.series.samples[1].label, ActivityLabel::Rest);
    EXPECT_TRUE(r.gaps.empty());
}

TEST(Resample, SingleSampleIsIdentity) {
    const auto s = make_series({{0, 60, ActivityLabel::Rest}});
    EXPECT_EQ(resample_uniform(s, 1.0).series, s);
}

TEST(Resample, LongGapsAreForwardFilledAndReported) {
    const auto r = resample_uniform(make_series({{0, 60, ActivityLabel::Rest}, {30, 90, ActivityLabel::Rest}}), 1.0);
    ASSERT_EQ(r.series.size(), 31u);
    for (int t = 0; t < 30; ++t) EXPECT_DOUBLE_EQ(r.series.samples[static_cast<std::size_t>(t)].bpm, 60.0);
    EXPECT_DOUBLE_EQ(r.series.samples[30].bpm, 90.0);
    ASSERT_EQ(r.gaps.size(), 1u);
    EXPECT_EQ(r.gaps[0], (Gap{"S", 0.0, 30.0}));
    EXPECT_EQ(gap_report_csv(r.gaps), "subject_id,gap_start_s,gap_end_s\nS,0,30\n");
}

TEST(Resample, EmptySeriesFails) {
    EXPECT_EQ(code_of([] { resample_uniform(make_series({}), 1.0); }), ErrorCode::EmptySeries);
}

TEST(Resample, NearestLabelAndIdempotence) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<HeartRateSample> s;
        double t = rng.uniform(0.0, 3.0);
        const int n = 2 + static_cast<int>(rng.index(40));
        for (int i = 0; i < n; ++i) {
            s.push_back({t, rng.uniform(50, 150), label_from_index(static_cast<int>(rng.index(5)))});
            t += rng.uniform(0.1, rng.uniform() < 0.1 ? 25.0 : 3.0);
        }
        const double period = rng.uniform(0.5, 2.0);
        const auto once = resample_uniform(make_series(s), period);
        const auto twice = resample_uniform(once.series, period);
        ASSERT_EQ(once.series, twice.series);
        EXPECT_TRUE(twice.gaps.empty());
        for (std::size_t k = 1; k < once.series.size(); ++k)
            EXPECT_NEAR(once.series.samples[k].timestamp - once.series.samples[k - 1].timestamp, period, 1e-9);
        // Labels equal the label of the nearest original sample (earlier on ties).
        for (const auto& out : once.series.samples) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < s.size(); ++i)
                if (std::abs(s[i].timestamp - out.timestamp) < std::abs(s[best].timestamp - out.timestamp)) best = i;
            EXPECT_EQ(out.label, s[best].label);
        }
    }
}

// ---------------------------------------------------------------------------

TEST(Synthetic, DeterministicPerSeed) {
    SyntheticCohortSpec spec;
    spec.seed = 1;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_EQ(a.series, b.series);
    EXPECT_EQ(a.groups, b.groups);
    EXPECT_EQ(write_corpus_csv(a.series), write_corpus_csv(b.series));
    spec.seed = 2;
    EXPECT_NE(generate_synthetic(spec).series, a.series);
}

TEST(Synthetic, ProtocolShapeAndLabels) {
    SyntheticCohortSpec spec;
    const auto cohort = generate_synthetic(spec);
    ASSERT_EQ(cohort.series.size(), 30u);
    for (const auto& s : cohort.series) {
        ASSERT_EQ(s.size(), 780u);
        EXPECT_EQ(s.samples[239].label, ActivityLabel::Rest);
        EXPECT_EQ(s.samples[240].label, ActivityLabel::Breathe);
        EXPECT_EQ(s.samples[300].label, ActivityLabel::Activity);
        EXPECT_EQ(s.samples[600].label, ActivityLabel::RestAC);
        EXPECT_EQ(s.samples[720].label, ActivityLabel::Type);
        for (const auto& x : s.samples) EXPECT_TRUE(x.bpm > kMinBpm && x.bpm < kMaxBpm);
    }
    std::map<int, int> sizes;
    for (const auto& [id, g] : cohort.groups) ++sizes[g];
    EXPECT_EQ(sizes[0], 15);
    EXPECT_EQ(sizes[1], 15);
}

TEST(Synthetic, NoNoiseNoLagIsPiecewiseConstant) {
    SyntheticCohortSpec spec;
    spec.n_subjects = 6;
    spec.n_groups = 2;
    spec.noise_std = 0.0;
    spec.lag_tau_s = 0.0;
    const auto cohort = generate_synthetic(spec);
    const auto profiles = default_group_offsets(2);
    for (const auto& s : cohort.series) {
        const auto& off = profiles[static_cast<std::size_t>(cohort.groups.at(s.subject_id))];
        const double baseline = s.samples[0].bpm - off[0];
        EXPECT_GE(baseline, 45.0);
        EXPECT_LE(baseline, 100.0);
        for (const auto& x : s.samples)
            EXPECT_NEAR(x.bpm, baseline + off[static_cast<std::size_t>(label_index(x.label))], 1e-9);
    }
}

TEST(Synthetic, InvalidSpecs) {
    SyntheticCohortSpec spec;
    spec.n_subjects = 30;
    spec.n_groups = 31;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
    spec.n_groups = 2;
    spec.segment_durations_s[3] = 0.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
    spec = {};
    spec.noise_ar_coeff = 1.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
    spec = {};
    spec.group_offset_profiles = default_group_offsets(3);
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
}

TEST(Synthetic, DurationJitter) {
    SyntheticCohortSpec spec;
    spec.duration_jitter = 0.25;
    const auto a = generate_synthetic(spec);
    EXPECT_EQ(a.series, generate_synthetic(spec).series);

    std::set<std::size_t> lengths;
    for (const auto& s : a.series) {
        std::array<int, kActivityCount> count{};
        for (const auto& x : s.samples) ++count[static_cast<std::size_t>(label_index(x.label))];
        for (std::size_t k = 0; k < kActivityCount; ++k) {
            const double d = spec.segment_durations_s[k];
            EXPECT_GE(count[k], std::floor(0.75 * d) - 1);
            EXPECT_LE(count[k], std::ceil(1.25 * d) + 1);
        }
        lengths.insert(s.size());
    }
    EXPECT_GT(lengths.size(), 20u);

    // baselines, groups and the noise stream are shared with the unjittered cohort
    spec.duration_jitter = 0.0;
    const auto b = generate_synthetic(spec);
    EXPECT_EQ(a.groups, b.groups);
    for (std::size_t i = 0; i < a.series.size(); ++i) EXPECT_EQ(a.series[i].samples[0], b.series[i].samples[0]);

    spec.duration_jitter = 1.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
    spec.duration_jitter = -0.1;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
}

TEST(Synthetic, SubjectOffsetNoise) {
    SyntheticCohortSpec spec;
    spec.noise_std = 0.0;
    spec.lag_tau_s = 0.0;
    spec.baseline_std = 0.0;
    const auto plain = generate_synthetic(spec);
    spec.subject_offset_std = 5.0;
    const auto noisy = generate_synthetic(spec);
    EXPECT_EQ(noisy.series, generate_synthetic(spec).series);

    std::vector<double> dev;
    for (std::size_t i = 0; i < plain.series.size(); ++i) {
        const auto& p = plain.series[i].samples;
        const auto& q = noisy.series[i].samples;
        ASSERT_EQ(p.size(), q.size());
        for (std::size_t k : {0u, 240u, 300u, 600u, 720u}) {
            const double d = q[k].bpm - p[k].bpm;
            // constant within the segment
            EXPECT_NEAR(q[k + 30].bpm - p[k + 30].bpm, d, 1e-9);
            dev.push_back(d);
        }
    }
    double mean = 0, ss = 0;
    for (double d : dev) mean += d;
    mean /= static_cast<double>(dev.size());
    for (double d : dev) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / static_cast<double>(dev.size() - 1));
    EXPECT_NEAR(mean, 0.0, 1.5);
    EXPECT_NEAR(sd, 5.0, 1.0);

    spec.subject_offset_std = -1.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidSpec);
}

// Two groups whose profiles differ only by 30 BPM in the Activity segment.
// The between-group gap of a subject pair is 30 * (1 - lag loss) plus the
// difference of two N(65, 8) baselines, so the share of pairs separated by at
// least 20 BPM is Phi((gap - 20) / (8 sqrt 2)). The check compares the
// generator against that closed form.
TEST(Synthetic, ActivitySeparationMatchesClosedForm) {
    const double tau = 20.0, duration = 300.0;
    const double lag_loss = tau / duration * (1.0 - std::exp(-duration / tau));
    const double gap = 30.0 * (1.0 - lag_loss);
    const double expected = 0.5 * std::erfc(-((gap - 20.0) / (8.0 * std::sqrt(2.0))) / std::sqrt(2.0));

    int separated = 0, pairs = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticCohortSpec spec;
        spec.seed = seed;
        spec.n_subjects = 30;
        spec.group_offset_profiles = {{0, 5, 30, 10, 3}, {0, 5, 60, 10, 3}};
        const auto cohort = generate_synthetic(spec);
        std::vector<double> act_mean;
        std::vector<int> group;
        for (const auto& s : cohort.series) {
            double sum = 0;
            int n = 0;
            for (const auto& x : s.samples)
                if (x.label == ActivityLabel::Activity) {
                    sum += x.bpm;
                    ++n;
                }
            act_mean.push_back(sum / n);
            group.push_back(cohort.groups.at(s.subject_id));
        }
        for (std::size_t i = 0; i < act_mean.size(); ++i)
            for (std::size_t j = 0; j < act_mean.size(); ++j)
                if (group[i] == 1 && group[j] == 0) {
                    ++pairs;
                    if (std::abs(act_mean[i] - act_mean[j]) >= 20.0) ++separated;
                }
    }
    const double share = static_cast<double>(separated) / pairs;
    RecordProperty("separated_share", std::to_string(share));
    EXPECT_NEAR(share, expected, 0.08) << "expected " << expected;
    std::printf("separated share %.4f, closed form %.4f\n", share, expected);
}
