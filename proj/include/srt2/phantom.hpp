#pragma once

#include <string>
#include <utility>
#include <vector>

#include "srt2/volgrid.hpp"

namespace srt2 {

/// Circular vial in the plate plane. `center` is (x, z) in mm; the plate normal is y.
struct Vial {
    std::string label;
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = 1.0;  // mm
    double t2 = 100.0;    // ms
    double m0 = 1000.0;
};

/// Digital stand-in for the relaxometry plate: vials are cylinders spanning the plate
/// thickness (|y| <= thickness/2), the remaining plate area inside the field of view is
/// background material, and everything else is air (m0 = 0, t2 = background_t2).
struct PhantomSpec {
    std::vector<Vial> vials;
    double plate_thickness = 10.0;  // mm
    double background_m0 = 100.0;
    double background_t2 = 50.0;  // ms
    Eigen::Vector2d field_of_view{96.0, 96.0};  // mm, (x, z)

    /// Throws ConfigError if a vial is degenerate, vials overlap or leave the field of view.
    void validate() const;
};

/// Three-vial layout with the reference T2 values of the studied plate elements.
PhantomSpec default_phantom();

struct PhantomMaps {
    Volume3D m0;
    Volume3D t2;
};

/// Averages supersample^3 sub-samples per voxel. Voxels whose sub-samples all fall in
/// one material carry that material's values exactly.
PhantomMaps rasterize(const PhantomSpec& spec, const Grid3D& grid, int supersample);

}  // namespace srt2
