/********************************************************************************
 * Copyright 2026 The GPD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 ********************************************************************************/


#pragma once

// Small datasets, fast run configurations and constructed predictions used by
// the engine, experiment and acceptance tests.

#include <string>
#include <vector>

#include "gpd/engine.hpp"
#include "gpd/errors.hpp"
#include "gpd/experiments.hpp"
#include "properties.hpp"

namespace fixtures {

/// Fast configuration: narrow networks and a handful of epochs.
inline gpd::RunConfig quick_run(int epochs = 4)
{
    gpd::RunConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 2;
    cfg.optimizer.learning_rate = 1e-3;
    cfg.student = gpd::StudentDims{768, 24, 12, 0.3};
    cfg.teacher = gpd::TeacherDims{448, 24, 16, 10};
    cfg.teacher_epochs = 3;
    cfg.teacher_optimizer.learning_rate = 1e-3;
    cfg.probe_limit = 120;
    return cfg;
}

inline gpd::GeneratorConfig quick_generator(std::size_t subjects = 10, std::uint64_t seed = 3)
{
    gpd::GeneratorConfig g;
    g.n_subjects = subjects;
    g.seed = seed;
    return g;
}

inline gpd::ExperimentConfig quick_experiment(int epochs = 3, std::size_t subjects = 10)
{
    return {quick_generator(subjects), quick_run(epochs)};
}

/// A prediction whose evidence ranks @p top first (and @p second next).
inline gpd::TrialPrediction prediction(const std::string& id, int d_star, int top, int second = 0)
{
    gpd::TrialPrediction p;
    p.subject_id = id;
    p.d_star = d_star;
    p.evidence.scores[static_cast<std::size_t>(top - 1)] = 2.0;
    if (second > 0) {
        p.evidence.scores[static_cast<std::size_t>(second - 1)] = 1.0;
    }
    for (std::size_t q = 0; q < gpd::kQuestions; ++q) {
        p.labels[q] = 0;
        p.probability[q] = 0.1;
    }
    return p;
}

/// Every combination of (baseline, distilled, teacher) top-1 outcomes over a
/// small digit alphabet, each checked against a direct enumeration.
inline props::Failures transition_suite()
{
    props::Failures f;

    // Constructed five-trial case: truth, baseline, distilled, teacher top digits.
    struct Row {
        int truth, base, dist, teacher;
    };
    const std::vector<Row> rows{{3, 3, 3, 3}, {4, 1, 4, 4}, {5, 5, 2, 2}, {6, 1, 2, 6}, {7, 1, 7, 2}};
    std::vector<gpd::TrialPrediction> b, d, t;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string id = "T" + std::to_string(i);
        b.push_back(prediction(id, rows[i].truth, rows[i].base));
        d.push_back(prediction(id, rows[i].truth, rows[i].dist));
        t.push_back(prediction(id, rows[i].truth, rows[i].teacher));
    }
    const auto s = gpd::transition_stats(b, d, t);
    f.expect(s.both_correct == gpd::TransitionCell{1, 1, 0, 1, 0}, "five-trial both_correct");
    f.expect(s.repaired == gpd::TransitionCell{2, 1, 1, 1, 1}, "five-trial repaired");
    f.expect(s.dropped == gpd::TransitionCell{1, 0, 1, 1, 0}, "five-trial dropped");
    f.expect(s.both_wrong == gpd::TransitionCell{1, 1, 0, 0, 1}, "five-trial both_wrong");
    f.expect(s.trials() == 5, "five-trial partition");

    // Exhaustive enumeration over digits {1,2,3} with truth 1.
    std::vector<gpd::TrialPrediction> eb, ed, et;
    gpd::TransitionStats expected;
    int n = 0;
    for (int base = 1; base <= 3; ++base) {
        for (int dist = 1; dist <= 3; ++dist) {
            for (int teach = 1; teach <= 3; ++teach) {
                const std::string id = "E" + std::to_string(n++);
                eb.push_back(prediction(id, 1, base));
                ed.push_back(prediction(id, 1, dist));
                et.push_back(prediction(id, 1, teach));
                gpd::TransitionCell* cell = base == 1 ? (dist == 1 ? &expected.both_correct : &expected.dropped)
                                                      : (dist == 1 ? &expected.repaired : &expected.both_wrong);
                cell->total += 1;
                (teach == 1 ? cell->teacher_correct : cell->teacher_wrong) += 1;
                (dist == teach ? cell->teacher_consistent : cell->teacher_inconsistent) += 1;
            }
        }
    }
    const auto es = gpd::transition_stats(eb, ed, et);
    f.expect(es == expected, "exhaustive enumeration");
    f.expect(es.trials() == 27, "enumeration partition");

    // Distilled equal to the teacher: every changed trial is teacher-consistent.
    const auto same_teacher = gpd::transition_stats(eb, et, et);
    f.expect(same_teacher.repaired.teacher_inconsistent == 0 && same_teacher.dropped.teacher_inconsistent == 0,
             "distilled = teacher consistency");
    const auto same_base = gpd::transition_stats(eb, eb, et);
    f.expect(same_base.repaired.total == 0 && same_base.dropped.total == 0, "distilled = baseline");

    auto mismatched = ed;
    mismatched[0].subject_id = "other";
    bool threw = false;
    try {
        gpd::transition_stats(eb, mismatched, et);
    } catch (const gpd::ProtocolError&) {
        threw = true;
    }
    f.expect(threw, "split mismatch rejected");
    return f;
}

}  // namespace fixtures
