#pragma once

#include <memory>
#include <string>

#include "formlab/explore.hpp"
#include "formlab/store.hpp"

namespace formlab {

/// JSON/HTTP front end over a Store. Mutations and background jobs are
/// serialized; reads run concurrently. All routes live under /api.
class Service {
public:
    explicit Service(Store& store);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; port 0 picks a free one. Returns the port.
    /// Throws StoreError when the address cannot be bound.
    int bind(const std::string& host, int port);

    /// Serves until stop() is called. bind() must have succeeded.
    void listen();

    /// bind() plus listen() on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Cell array as returned by POST /api/cross-section.
std::string cross_section_json(const CrossSection& cs, const std::string& id);

}  // namespace formlab
