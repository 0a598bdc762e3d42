#pragma once

#include "solarst/kernel.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace solarst {

struct Sensor {
    std::string id;
    double x = 0.0; ///< metres
    double y = 0.0; ///< metres
};

/// Ordered set of sensors with planar coordinates. Ids are unique, coordinates
/// finite and pairwise distinct. Spatial operations (neighbour graphs, Voronoi
/// weights) additionally require at least three sensors.
class SensorLayout {
public:
    SensorLayout() = default;
    explicit SensorLayout(std::vector<Sensor> sensors);

    std::size_t size() const { return sensors_.size(); }
    bool empty() const { return sensors_.empty(); }
    const Sensor& operator[](std::size_t i) const { return sensors_[i]; }
    const std::vector<Sensor>& sensors() const { return sensors_; }

    std::optional<std::size_t> find(std::string_view id) const;
    /// Throws "unknown sensor" when absent.
    std::size_t index_of(std::string_view id) const;

    SensorLayout subset(std::span<const std::size_t> indices) const;
    /// All sensors except `excluded`, in layout order.
    SensorLayout without(std::span<const std::size_t> excluded) const;

private:
    std::vector<Sensor> sensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// rows x cols lattice with the given spacing; ids S00, S01, ... in row-major order.
SensorLayout grid_layout(int rows, int cols, double spacing);

enum class FieldKind { raw, detrended, residual };

std::string to_string(FieldKind kind);
FieldKind parse_field_kind(std::string_view name);

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// S x T matrix of observations on a fixed sensor layout. Missing entries are
/// carried only in the explicit mask; their slots in `values` hold NaN.
class SpatioTemporalField {
public:
    SpatioTemporalField(SensorLayout layout, std::vector<double> timestamps, Eigen::MatrixXd values,
                        FieldKind kind, MissingMask missing = {});

    const SensorLayout& layout() const { return layout_; }
    const std::vector<double>& timestamps() const { return timestamps_; }
    const Eigen::MatrixXd& values() const { return values_; }
    FieldKind kind() const { return kind_; }
    const MissingMask& missing() const { return missing_; }

    std::size_t sensors() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t times() const { return static_cast<std::size_t>(values_.cols()); }

    bool has_missing() const;
    bool is_missing(std::size_t s, std::size_t t) const;
    /// Throws unless every entry is observed; `what` names the caller in the message.
    void require_complete(std::string_view what) const;

    /// Common sample spacing; throws when fewer than two samples or spacing is not uniform.
    double spacing() const;

    SpatioTemporalField select_sensors(std::span<const std::size_t> indices) const;
    SpatioTemporalField with_values(Eigen::MatrixXd values, FieldKind kind) const;

private:
    SensorLayout layout_;
    std::vector<double> timestamps_;
    Eigen::MatrixXd values_;
    FieldKind kind_;
    MissingMask missing_;
};

/// One row of the long-form measurements table. An empty value marks a
/// missing observation.
struct Measurement {
    double timestamp = 0.0;
    std::string sensor_id;
    std::optional<double> value;
};

/// Reshapes long-form records into a field ordered by layout (rows) and time
/// (columns). Per sensor the records must arrive in strictly increasing time.
/// Sensor/time cells with no record become missing.
SpatioTemporalField ingest_field(std::span<const Measurement> records, const SensorLayout& layout);

/// Long-form view of a field, sensors in layout order within each timestamp.
std::vector<Measurement> to_measurements(const SpatioTemporalField& field);

/// Block means over non-overlapping windows. Output timestamps are the mean of
/// the sample times in each window; a trailing partial window is dropped.
/// Missing samples are skipped; a window with no observed samples stays missing.
SpatioTemporalField time_average(const SpatioTemporalField& field, double window);

struct TrendModel {
    Eigen::MatrixXd trend; ///< S x T, sampled at the field timestamps
    double bandwidth = 0.0;
    int degree = 1;
    Kernel kernel = Kernel::epanechnikov;
};

struct DetrendOptions {
    std::optional<double> bandwidth; ///< seconds; default span/8
    int degree = 1;
    Kernel kernel = Kernel::epanechnikov;
    /// Series longer than this are evaluated on an equispaced grid of this many
    /// points and linearly interpolated to the timestamps.
    std::size_t max_eval_points = 4096;
};

struct DetrendResult {
    SpatioTemporalField residuals;
    TrendModel trend;
};

double default_detrend_bandwidth(const SpatioTemporalField& field);

/// Local polynomial kernel regression of y on x evaluated at `at`.
/// Throws when a local design is singular, naming the evaluation index.
Eigen::VectorXd local_polynomial_smooth(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> at, double bandwidth, int degree,
                                        Kernel kernel);

DetrendResult detrend(const SpatioTemporalField& field, const DetrendOptions& options = {});

/// Adds a trend back onto detrended values.
SpatioTemporalField retrend(const SpatioTemporalField& detrended, const TrendModel& trend);

} // namespace solarst
