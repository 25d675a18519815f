#include "cogdiag/net.hpp"

#include <algorithm>
#include <cmath>

namespace cogdiag {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

void InteractionNet::project_nonneg() {
    for (double& w : w1) w = std::max(w, 0.0);
    for (double& w : w2) w = std::max(w, 0.0);
}

double InteractionNet::min_weight() const {
    double m = 0.0;
    bool first = true;
    for (double w : w1) {
        m = first ? w : std::min(m, w);
        first = false;
    }
    for (double w : w2) {
        m = first ? w : std::min(m, w);
        first = false;
    }
    return m;
}

void NetBuffers::resize(const InteractionNet& net) {
    x.assign(net.inputs, 0.0);
    u.assign(net.hidden, 0.0);
    h.assign(net.hidden, 0.0);
    gx.assign(net.inputs, 0.0);
}

void NetGrads::resize(const InteractionNet& net) {
    w1.assign(net.w1.size(), 0.0);
    b1.assign(net.b1.size(), 0.0);
    w2.assign(net.w2.size(), 0.0);
    b2 = 0.0;
}

void NetGrads::zero() {
    std::fill(w1.begin(), w1.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.begin(), w2.end(), 0.0);
    b2 = 0.0;
}

double net_forward(const InteractionNet& net, NetBuffers& buf) {
    double z = net.b2;
    for (std::size_t j = 0; j < net.hidden; ++j) {
        double u = net.b1[j];
        const double* row = net.w1.data() + j * net.inputs;
        for (std::size_t k = 0; k < net.inputs; ++k) u += row[k] * buf.x[k];
        buf.u[j] = u;
        buf.h[j] = std::clamp(u, 0.0, 1.0);
        z += net.w2[j] * buf.h[j];
    }
    return z;
}

void net_backward(const InteractionNet& net, NetBuffers& buf, double gz, NetGrads& grads) {
    auto& gx = buf.gx;
    std::fill(gx.begin(), gx.end(), 0.0);
    grads.b2 += gz;
    for (std::size_t j = 0; j < net.hidden; ++j) {
        grads.w2[j] += gz * buf.h[j];
        const bool active = buf.u[j] > 0.0 && buf.u[j] < 1.0;
        if (!active) continue;
        const double gu = gz * net.w2[j];
        grads.b1[j] += gu;
        double* grow = grads.w1.data() + j * net.inputs;
        const double* row = net.w1.data() + j * net.inputs;
        for (std::size_t k = 0; k < net.inputs; ++k) {
            grow[k] += gu * buf.x[k];
            gx[k] += gu * row[k];
        }
    }
}

}  // namespace cogdiag
