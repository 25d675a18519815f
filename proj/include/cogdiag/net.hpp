#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cogdiag {

// Numerically stable logistic.
double sigmoid(double x);

// Monotone two-layer scoring network shared by the diagnosis models:
//   z = w2 . clip01(W1 x + b1) + b2,   p = sigmoid(z)
// Monotonicity in x holds whenever w1 and w2 are non-negative, which the
// trainers enforce by projection after every update.
struct InteractionNet {
    std::size_t inputs = 0;
    std::size_t hidden = 0;
    std::vector<double> w1;  // hidden x inputs, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;

    void project_nonneg();
    double min_weight() const;

    bool operator==(const InteractionNet&) const = default;
};

// Scratch space reused across forward/backward calls.
struct NetBuffers {
    std::vector<double> x;   // inputs
    std::vector<double> u;   // hidden pre-activations
    std::vector<double> h;   // hidden activations
    std::vector<double> gx;  // dL/dx

    void resize(const InteractionNet& net);
};

struct NetGrads {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    void resize(const InteractionNet& net);
    void zero();
};

// Reads buf.x, fills buf.u / buf.h, returns the pre-sigmoid score z.
double net_forward(const InteractionNet& net, NetBuffers& buf);

// Given dL/dz, accumulates parameter gradients and writes dL/dx into buf.gx.
void net_backward(const InteractionNet& net, NetBuffers& buf, double gz, NetGrads& grads);

}  // namespace cogdiag
