#pragma once

#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ebmflow {

class LayoutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered description of the shaped segments (weight matrices, bias
/// vectors) packed into one flat parameter vector.
class ParameterLayout {
public:
    struct Segment {
        std::string name;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        Eigen::Index offset = 0;
        Eigen::Index size() const { return rows * cols; }
    };

    ParameterLayout() = default;

    void add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        Segment s{std::move(name), rows, cols, total_};
        total_ += s.size();
        segments_.push_back(std::move(s));
    }

    Eigen::Index total_size() const { return total_; }
    const std::vector<Segment>& segments() const { return segments_; }

    const Segment& segment(const std::string& name) const {
        for (const auto& s : segments_)
            if (s.name == name) return s;
        throw LayoutError("no parameter segment named '" + name + "'");
    }

    bool operator==(const ParameterLayout& other) const {
        if (segments_.size() != other.segments_.size()) return false;
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const auto& a = segments_[i];
            const auto& b = other.segments_[i];
            if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
        }
        return true;
    }

private:
    std::vector<Segment> segments_;
    Eigen::Index total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParameterLayout>;

/// Flat parameter vector tied to a layout. Arithmetic requires matching
/// layouts; a mismatch is a LayoutError.
struct ParameterVector {
    LayoutPtr layout;
    Eigen::VectorXd values;

    ParameterVector() = default;
    ParameterVector(LayoutPtr l, Eigen::VectorXd v) : layout(std::move(l)), values(std::move(v)) {
        if (layout && values.size() != layout->total_size())
            throw LayoutError("parameter vector length does not match layout");
    }

    static ParameterVector zeros(LayoutPtr l) {
        Eigen::Index n = l->total_size();
        return ParameterVector(std::move(l), Eigen::VectorXd::Zero(n));
    }

    Eigen::Index size() const { return values.size(); }

    Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const {
        const auto& s = layout->segment(name);
        return {values.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<Eigen::MatrixXd> view(const std::string& name) {
        const auto& s = layout->segment(name);
        return {values.data() + s.offset, s.rows, s.cols};
    }

    void check_same_layout(const ParameterVector& other) const {
        if (!layout || !other.layout || !(*layout == *other.layout))
            throw LayoutError("parameter layout mismatch");
    }

    ParameterVector operator+(const ParameterVector& o) const {
        check_same_layout(o);
        return {layout, values + o.values};
    }
    ParameterVector operator-(const ParameterVector& o) const {
        check_same_layout(o);
        return {layout, values - o.values};
    }
    ParameterVector operator*(double a) const { return {layout, values * a}; }
    double dot(const ParameterVector& o) const {
        check_same_layout(o);
        return values.dot(o.values);
    }
};

inline ParameterVector operator*(double a, const ParameterVector& p) { return p * a; }

}  // namespace ebmflow
