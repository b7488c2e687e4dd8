#include "crossgrid/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace crossgrid::synthetic {

namespace {

struct Profile {
  double base;
  double temp_slope;   // kWh per degree
  double temp_ref;
  double solar_slope;  // kWh per W/m2
  double weekend;      // weekend multiplier
};

constexpr Profile group_profile[2] = {
    {9.0, -0.6, 18.0, 0.0, 1.12},
    {4.0, 0.12, 0.0, 0.006, 0.8},
};

}  // namespace

Fleet make_fleet(const FleetOptions& opt) {
  if (opt.per_group < 1) throw Error("make_fleet: per_group must be >= 1");
  if (opt.train_days < 14 || opt.days < opt.train_days + 14) throw Error("make_fleet: need >= 14 train and test days");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;

  Fleet f;
  f.train = {opt.first_day, opt.first_day + static_cast<Day>(opt.train_days) - 1};
  f.test = {opt.first_day + static_cast<Day>(opt.train_days), opt.first_day + static_cast<Day>(opt.days) - 1};

  f.weather.station_id = "station";
  for (auto& ch : f.weather.channels) ch.id = f.weather.station_id;
  f.weather.channels[0].unit = "degC";
  f.weather.channels[1].unit = "W/m2";
  f.weather.channels[2].unit = "m/s";
  double anomaly = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < opt.days; ++k) {
    const Day d = opt.first_day + static_cast<Day>(k);
    const double doy = static_cast<double>((d + 365 * 50) % 365);  // rough day of year
    anomaly = 0.7 * anomaly + 2.0 * gauss(rng);
    const double temp = 11.0 + 7.0 * std::sin(two_pi * (doy - 110.0) / 365.0) + anomaly;
    const double solar = std::max(0.0, 140.0 + 90.0 * std::sin(two_pi * (doy - 80.0) / 365.0) + 40.0 * gauss(rng));
    const double wind = std::abs(4.0 + 1.8 * gauss(rng));
    const double vals[3] = {temp, solar, wind};
    for (std::size_t c = 0; c < 3; ++c) {
      f.weather.channels[c].days.push_back(d);
      f.weather.channels[c].values.emplace_back(vals[c]);
    }
  }

  auto schema = metadata::household_schema();
  std::vector<metadata::BuildingDescription> rows;
  const std::size_t n = 2 * opt.per_group;
  for (std::size_t b = 0; b < n; ++b) {
    const int g = static_cast<int>(b % 2);
    const std::string id = std::to_string(b + 1);
    const Profile& p = group_profile[g];
    const double jb = 1.0 + 0.03 * (2.0 * unit(rng) - 1.0);
    const double js = 1.0 + 0.03 * (2.0 * unit(rng) - 1.0);

    evaluation::FleetMember m;
    m.id = id;
    m.weather = f.weather;
    m.energy.id = id;
    m.energy.unit = "kWh";
    for (std::size_t k = 0; k < opt.days; ++k) {
      const Day d = opt.first_day + static_cast<Day>(k);
      const double temp = *f.weather.channels[0].values[k];
      const double solar = *f.weather.channels[1].values[k];
      // 1970-01-01 was a Thursday: weekday index 0 = Monday
      const int weekday = static_cast<int>(((d % 7) + 7 + 3) % 7);
      double load = p.base * jb + js * (p.temp_slope * (temp - p.temp_ref) + p.solar_slope * solar);
      if (weekday >= 5) load *= p.weekend;
      load *= 1.0 + opt.noise * gauss(rng);
      m.energy.days.push_back(d);
      m.energy.values.emplace_back(std::max(0.1, load));
    }
    f.members.push_back(std::move(m));
    f.groups.push_back(g);

    metadata::BuildingDescription desc;
    desc.building_id = id;
    const bool extra = unit(rng) < 0.5;
    if (g == 0) {
      desc.values = {std::to_string(4 + (extra ? 1 : 0)), "detached", "1965-1974", "4",
                     std::to_string(38 + static_cast<int>(unit(rng) * 5))};
    } else {
      desc.values = {std::to_string(1 + (extra ? 1 : 0)), "flat", "2002-2006", extra ? "2" : "1",
                     std::to_string(16 + static_cast<int>(unit(rng) * 5))};
    }
    rows.push_back(std::move(desc));
  }
  f.descriptions = metadata::make_table(schema, std::move(rows));
  return f;
}

void populate(store::Store& s, const Fleet& f) {
  s.put_descriptions(f.descriptions);
  s.put_weather(f.weather);
  for (const auto& m : f.members) {
    s.put_energy(m.energy);
    s.put_link({m.id, m.energy.id, f.weather.station_id});
  }
}

}  // namespace crossgrid::synthetic
