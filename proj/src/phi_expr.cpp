#include "lsi/phi_expr.hpp"

#include <cmath>

#include "json.hpp"

namespace lsi {

using nlohmann::json;

double PhiExpr::eval(const DerivBundle& b, double gradient_floor) const {
    switch (op) {
        case Op::Const:
            return const_value;
        case Op::D1:
            require(index >= 0 && index < b.grad.size(), "phi: d1 index out of range");
            return b.grad(index);
        case Op::D2:
            require(index >= 0 && index < b.hess_vech.size(),
                    "phi: d2 index out of range");
            return b.hess_vech(index);
        case Op::InvGradNorm:
            if (b.grad_norm < gradient_floor)
                throw NumericalError("phi: degenerate gradient under 1/|grad f|");
            return std::pow(b.grad_norm, -index);
        case Op::Sum: {
            double s = 0.0;
            for (const auto& a : args) s += a.eval(b, gradient_floor);
            return s;
        }
        case Op::Product: {
            double s = 1.0;
            for (const auto& a : args) s *= a.eval(b, gradient_floor);
            return s;
        }
        case Op::Named:
            switch (builtin) {
                case Builtin::Unity:
                    return 1.0;
                case Builtin::MeanCurvature:
                    return mean_curvature(b, gradient_floor);
                case Builtin::GaussCurvature:
                    return gauss_curvature_adjugate(b, gradient_floor);
                case Builtin::Willmore: {
                    double h = mean_curvature(b, gradient_floor);
                    return h * h;
                }
                case Builtin::MinkowskiFj: {
                    auto cb = curvature_bundle(b, gradient_floor);
                    require(index >= 1 && index <= cb.Fj.size(),
                            "phi: minkowski index out of range");
                    return cb.Fj(index - 1);
                }
                case Builtin::WgSquared: {
                    if (b.grad_norm < gradient_floor)
                        throw NumericalError("phi: degenerate gradient in wg_squared");
                    int d = static_cast<int>(b.grad.size());
                    double w = (d - 1) * mean_curvature(b, gradient_floor) / b.grad_norm;
                    return w * w;
                }
            }
    }
    throw InvalidArgument("phi: malformed expression node");
}

bool PhiExpr::uses_second_derivatives() const {
    switch (op) {
        case Op::D2:
            return true;
        case Op::Named:
            return builtin != Builtin::Unity;
        case Op::Sum:
        case Op::Product:
            for (const auto& a : args)
                if (a.uses_second_derivatives()) return true;
            return false;
        default:
            return false;
    }
}

PhiExpr PhiExpr::constant(double v) {
    PhiExpr e;
    e.op = Op::Const;
    e.const_value = v;
    return e;
}

PhiExpr PhiExpr::named(Builtin b, int j) {
    PhiExpr e;
    e.op = Op::Named;
    e.builtin = b;
    e.index = j;
    return e;
}

namespace {

PhiExpr named_from_string(const std::string& s) {
    if (s == "unity") return PhiExpr::named(PhiExpr::Builtin::Unity);
    if (s == "mean_curvature") return PhiExpr::named(PhiExpr::Builtin::MeanCurvature);
    if (s == "gauss_curvature") return PhiExpr::named(PhiExpr::Builtin::GaussCurvature);
    if (s == "willmore") return PhiExpr::named(PhiExpr::Builtin::Willmore);
    if (s == "wg_squared") return PhiExpr::named(PhiExpr::Builtin::WgSquared);
    if (s.rfind("minkowski_F", 0) == 0) {
        int j = std::stoi(s.substr(11));
        return PhiExpr::named(PhiExpr::Builtin::MinkowskiFj, j);
    }
    throw InvalidArgument("unknown named integrand: " + s);
}

PhiExpr parse_node(const json& j) {
    if (j.is_string()) return named_from_string(j.get<std::string>());
    if (j.is_number()) return PhiExpr::constant(j.get<double>());
    require(j.is_object() && j.contains("op"), "phi: node must have an \"op\"");
    std::string op = j["op"].get<std::string>();
    PhiExpr e;
    if (op == "const") {
        e.op = PhiExpr::Op::Const;
        e.const_value = j.at("value").get<double>();
    } else if (op == "d1") {
        e.op = PhiExpr::Op::D1;
        e.index = j.at("i").get<int>();
    } else if (op == "d2") {
        e.op = PhiExpr::Op::D2;
        e.index = j.at("i").get<int>();
    } else if (op == "inv_grad_norm") {
        e.op = PhiExpr::Op::InvGradNorm;
        e.index = j.value("pow", 1);
        require(e.index >= 1, "phi: inv_grad_norm power must be >= 1");
    } else if (op == "sum" || op == "prod" || op == "product") {
        e.op = (op == "sum") ? PhiExpr::Op::Sum : PhiExpr::Op::Product;
        require(j.contains("args") && j["args"].is_array() && !j["args"].empty(),
                "phi: sum/prod needs nonempty args");
        for (const auto& a : j["args"]) e.args.push_back(parse_node(a));
    } else if (op == "named") {
        return named_from_string(j.at("name").get<std::string>());
    } else {
        throw InvalidArgument("phi: unknown op \"" + op + "\"");
    }
    return e;
}

json node_to_json(const PhiExpr& e) {
    switch (e.op) {
        case PhiExpr::Op::Const:
            return {{"op", "const"}, {"value", e.const_value}};
        case PhiExpr::Op::D1:
            return {{"op", "d1"}, {"i", e.index}};
        case PhiExpr::Op::D2:
            return {{"op", "d2"}, {"i", e.index}};
        case PhiExpr::Op::InvGradNorm:
            return {{"op", "inv_grad_norm"}, {"pow", e.index}};
        case PhiExpr::Op::Sum:
        case PhiExpr::Op::Product: {
            json a = json::array();
            for (const auto& c : e.args) a.push_back(node_to_json(c));
            return {{"op", e.op == PhiExpr::Op::Sum ? "sum" : "prod"}, {"args", a}};
        }
        case PhiExpr::Op::Named: {
            switch (e.builtin) {
                case PhiExpr::Builtin::Unity: return "unity";
                case PhiExpr::Builtin::MeanCurvature: return "mean_curvature";
                case PhiExpr::Builtin::GaussCurvature: return "gauss_curvature";
                case PhiExpr::Builtin::Willmore: return "willmore";
                case PhiExpr::Builtin::WgSquared: return "wg_squared";
                case PhiExpr::Builtin::MinkowskiFj:
                    return "minkowski_F" + std::to_string(e.index);
            }
        }
    }
    throw InvalidArgument("phi: malformed expression node");
}

}  // namespace

PhiExpr PhiExpr::from_json(const std::string& text) {
    // Accept both a bare name and a JSON document.
    if (!text.empty() && text[0] != '{' && text[0] != '"' && text[0] != '[' &&
        !std::isdigit(static_cast<unsigned char>(text[0])) && text[0] != '-')
        return named_from_string(text);
    return parse_node(json::parse(text));
}

std::string PhiExpr::to_json() const { return node_to_json(*this).dump(); }

}  // namespace lsi
