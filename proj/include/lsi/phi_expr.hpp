#pragma once

#include <memory>
#include <optional>

#include "lsi/geometry.hpp"

namespace lsi {

/// Composition tree for integrands phi(d_f): constants, components of the
/// derivative bundle, powers of 1/|grad f|, sums and products, plus named
/// curvature shortcuts. JSON form documented in README (op/args nodes, or
/// a bare string for a named expression).
class PhiExpr {
public:
    enum class Op {
        Const,
        D1,           // grad component i
        D2,           // vech(hess) component i
        InvGradNorm,  // |grad f|^{-p}
        Sum,
        Product,
        Named,
    };
    enum class Builtin {
        Unity,
        MeanCurvature,
        GaussCurvature,
        Willmore,      // H^2
        MinkowskiFj,   // F_j, j in 1..d (index field)
        WgSquared,     // w_g^2 for g == 1: ((d-1) H / |grad f|)^2
    };

    Op op = Op::Const;
    double const_value = 0.0;
    int index = 0;  // component index for D1/D2, power for InvGradNorm, j for MinkowskiFj
    Builtin builtin = Builtin::Unity;
    std::vector<PhiExpr> args;

    double eval(const DerivBundle& b, double gradient_floor = kGradientFloor) const;

    // True when the evaluation can depend on second derivatives.
    bool uses_second_derivatives() const;

    static PhiExpr constant(double v);
    static PhiExpr named(Builtin b, int j = 0);
    static PhiExpr from_json(const std::string& json_or_name);
    std::string to_json() const;
};

}  // namespace lsi
