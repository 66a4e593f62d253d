// Synthetic archetype specs shared by the acceptance suite.
#pragma once

#include <vector>

#include "icutraj/synthgen.hpp"

namespace fixtures {

using icutraj::cohort::Vital;
using icutraj::synthgen::ArchetypeSpec;
using icutraj::synthgen::FeatureTemplate;

inline ArchetypeSpec archetype(const std::string& id,
                               std::array<FeatureTemplate, 8> templates, double mortality,
                               double los, int n) {
    ArchetypeSpec a;
    a.archetype_id = id;
    a.templates = templates;
    a.mortality_rate = mortality;
    a.mean_los_days = los;
    a.n_patients = n;
    a.icd_class_distribution = {{"390-459 circulatory", 0.4},
                                {"460-519 respiratory", 0.3},
                                {"580-629 genitourinary", 0.3}};
    return a;
}

/// Six cleanly separated archetypes whose mortality-feature relationships
/// differ per archetype: alternating age slopes plus one archetype-specific
/// risk vital. A pooled additive model cannot represent the per-cluster
/// relationships; cluster-wise models can.
inline std::vector<ArchetypeSpec> heterogeneous_archetypes() {
    std::vector<ArchetypeSpec> specs;
    // resp, sats, temp, sbp, hr, eye, verbal, motor
    specs.push_back(archetype("h0",
                              {{{17.0, 0.0, 1.0},
                                {95.9, 0.0, 0.6},
                                {36.8, 0.0, 0.08},
                                {116.0, 0.0, 4.0},
                                {84.0, 0.0, 3.0},
                                {3.9, 0.0, 0.04},
                                {4.7, 0.0, 0.05},
                                {5.9, 0.0, 0.04}}},
                              0.30, 1.2, 100));
    specs.push_back(archetype("h1",
                              {{{13.0, 0.0, 0.8},
                                {98.5, 0.0, 0.4},
                                {37.2, 0.0, 0.12},
                                {111.0, 0.0, 3.5},
                                {96.0, 0.0, 5.0},
                                {1.8, 0.0, 0.08},
                                {1.6, 0.0, 0.08},
                                {3.6, 0.0, 0.10}}},
                              0.45, 1.5, 100));
    specs.push_back(archetype("h2",
                              {{{16.7, 0.05, 1.2},
                                {97.6, -0.05, 0.8},
                                {37.3, 0.015, 0.15},
                                {115.0, -0.3, 4.5},
                                {90.0, 0.4, 5.0},
                                {1.1, 0.0, 0.03},
                                {1.3, 0.0, 0.05},
                                {3.2, 0.0, 0.10}}},
                              0.60, 1.0, 100));
    specs.push_back(archetype("h3",
                              {{{15.1, -0.03, 0.8},
                                {97.5, 0.03, 0.5},
                                {37.4, -0.02, 0.08},
                                {115.0, 0.15, 3.5},
                                {86.0, -0.35, 3.5},
                                {2.2, 0.05, 0.05},
                                {2.0, 0.08, 0.08},
                                {4.2, 0.05, 0.08}}},
                              0.25, 1.3, 100));
    specs.push_back(archetype("h4",
                              {{{15.7, 0.0, 1.5},
                                {97.8, 0.0, 0.5},
                                {37.1, 0.0, 0.10},
                                {114.0, 0.0, 4.0},
                                {88.0, 0.0, 9.0},
                                {3.8, 0.0, 0.05},
                                {1.9, 0.0, 0.08},
                                {5.4, 0.0, 0.06}}},
                              0.40, 1.1, 100));
    specs.push_back(archetype("h5",
                              {{{18.5, 0.0, 0.8},
                                {96.8, 0.0, 0.5},
                                {37.4, 0.0, 0.45},
                                {105.0, 0.0, 3.5},
                                {95.0, 0.0, 4.5},
                                {3.4, 0.0, 0.08},
                                {3.0, 0.0, 0.10},
                                {5.2, 0.0, 0.08}}},
                              0.50, 1.4, 100));

    const Vital risk_vitals[6] = {Vital::HeartRate,    Vital::OxygenSaturation,
                                  Vital::SystolicBp,   Vital::RespirationRate,
                                  Vital::Temperature,  Vital::HeartRate};
    for (size_t i = 0; i < specs.size(); ++i) {
        specs[i].age_mean = 60.0 + 2.0 * static_cast<double>(i);
        specs[i].age_sd = 12.0;
        specs[i].age_mortality_slope = i % 2 == 0 ? 2.2 : -2.2;
        specs[i].risk_vital = risk_vitals[i];
        specs[i].risk_vital_slope = i % 2 == 0 ? 1.8 : -1.8;
    }
    return specs;
}

/// Six stationary archetypes (no drift, tiny oscillation): the first hours
/// of a stay look like the whole stay. The first archetype is largest so
/// "largest cluster" is unambiguous.
inline std::vector<ArchetypeSpec> stationary_archetypes() {
    auto specs = heterogeneous_archetypes();
    const char* ids[6] = {"s0", "s1", "s2", "s3", "s4", "s5"};
    for (size_t i = 0; i < specs.size(); ++i) {
        specs[i].archetype_id = ids[i];
        for (auto& t : specs[i].templates) {
            t.drift_per_hour = 0.0;
            t.osc_amplitude = std::min(t.osc_amplitude, 0.5);
        }
        specs[i].mean_los_days = 1.0 + 0.2 * static_cast<double>(i);
        specs[i].n_patients = 90;
        specs[i].risk_vital.reset();
        specs[i].age_mortality_slope = 0.3;
    }
    specs[0].n_patients = 150;
    return specs;
}

}  // namespace fixtures
