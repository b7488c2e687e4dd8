#pragma once

#include <cstdint>
#include <vector>

#include "crossgrid/evaluation.hpp"
#include "crossgrid/metadata.hpp"
#include "crossgrid/store.hpp"

namespace crossgrid::synthetic {

struct FleetOptions {
  std::uint64_t seed = 1;
  std::size_t per_group = 3;
  std::size_t days = 180;
  std::size_t train_days = 140;
  Day first_day = 16161;  // 2014-04-01
  double noise = 0.04;    // relative daily noise
};

/// Two groups of households sharing one weather station. Group 0 is a
/// large heated house whose load falls with temperature; group 1 is a small
/// flat whose load rises with temperature and irradiance and drops at
/// weekends. Descriptions differ by group, with small jitter inside a group.
struct Fleet {
  metadata::DescriptionTable descriptions;
  std::vector<evaluation::FleetMember> members;
  std::vector<int> groups;  // aligned with members
  timeseries::WeatherSeries weather;
  DayRange train;
  DayRange test;
};

Fleet make_fleet(const FleetOptions& opt = {});

/// Writes descriptions, series, weather and links (series id = building id,
/// station id = the fleet station).
void populate(store::Store& s, const Fleet& f);

}  // namespace crossgrid::synthetic
